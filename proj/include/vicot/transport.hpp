// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "vicot/tool_types.hpp"

namespace vicot {

using namespace std::chrono_literals;

inline constexpr int kProtocolVersion = 1;

/// Anything that can list and execute tools: a stdio child process or an in-process double.
class ToolEndpoint {
 public:
  virtual ~ToolEndpoint() = default;
  virtual const std::string& server_name() const = 0;
  virtual std::vector<ToolDescriptor> list_tools() = 0;
  /// Tool-level failures come back as is_error results; only transport problems throw.
  virtual ToolResult call_tool(const ToolCall& call, std::chrono::milliseconds timeout) = 0;
};

struct LaunchSpec {
  std::string server_name;
  std::string command;
  std::vector<std::string> args;
  std::filesystem::path working_dir;
  std::map<std::string, std::string> env;
};

struct TransportOptions {
  std::chrono::milliseconds handshake_timeout = 10s;
  std::chrono::milliseconds call_timeout = 60s;
};

enum class ServerState { spawned, ready, failed, closed };

std::string_view to_string(ServerState state);

/// Host side of one tool server speaking newline-delimited JSON over the child's stdin/stdout.
/// Frames are {"id", "kind", "payload"}; kinds are hello, list_tools, call_tool and result.
/// Writes are serialized; responses are correlated by id on a reader thread, so calls may be
/// issued from several threads. The child's stderr is kept as a log and never parsed.
class StdioServer final : public ToolEndpoint {
 public:
  /// Starts the process and performs the hello handshake.
  /// Throws SpawnFailed or HandshakeTimeout. A protocol version mismatch yields a failed handle.
  static std::shared_ptr<StdioServer> spawn(LaunchSpec spec, TransportOptions options = {});

  ~StdioServer() override;
  StdioServer(const StdioServer&) = delete;
  StdioServer& operator=(const StdioServer&) = delete;

  const std::string& server_name() const override { return spec_.server_name; }
  ServerState state() const;

  /// Tools cached from the handshake or the last list_tools request.
  std::vector<ToolDescriptor> discovered_tools() const;

  /// Requests the current tool list from the server and refreshes the cache. Throws TransportClosed.
  std::vector<ToolDescriptor> list_tools() override;

  /// Throws WrongServer, TransportClosed or Timeout.
  ToolResult call_tool(const ToolCall& call, std::chrono::milliseconds timeout) override;
  ToolResult call_tool(const ToolCall& call) { return call_tool(call, options_.call_timeout); }

  void close();

  /// Every frame sent ("> ") and received ("< ") in wire order.
  std::vector<std::string> transcript() const;
  std::string stderr_log() const;
  /// Responses whose id matched no outstanding request.
  std::size_t orphan_responses() const { return orphans_.load(); }
  int pid() const { return pid_; }

 private:
  StdioServer(LaunchSpec spec, TransportOptions options);

  json request(const std::string& kind, json payload, std::chrono::milliseconds timeout);
  void write_frame(const json& frame);
  void reader_loop();
  void stderr_loop();
  void fail_pending(const std::string& why);
  void reap();

  LaunchSpec spec_;
  TransportOptions options_;
  int pid_ = -1;
  int stdin_fd_ = -1;
  int stdout_fd_ = -1;
  int stderr_fd_ = -1;

  mutable std::mutex mutex_;  // state_, pending_, tools_, transcript_, stderr_
  std::mutex write_mutex_;
  ServerState state_ = ServerState::spawned;
  std::map<std::uint64_t, std::promise<json>> pending_;
  std::promise<json> hello_;
  bool hello_seen_ = false;
  std::vector<ToolDescriptor> tools_;
  std::vector<std::string> transcript_;
  std::string stderr_;
  std::atomic<std::uint64_t> next_id_{1};
  std::atomic<std::size_t> orphans_{0};
  std::thread reader_;
  std::thread stderr_reader_;
};

inline std::shared_ptr<StdioServer> spawn(LaunchSpec spec, TransportOptions options = {}) {
  return StdioServer::spawn(std::move(spec), options);
}

/// Routes calls to endpoints by server name.
class ToolRouter {
 public:
  void add(std::shared_ptr<ToolEndpoint> endpoint);
  std::shared_ptr<ToolEndpoint> find(const std::string& server_name) const;
  std::vector<std::string> server_names() const;
  /// Tools of every endpoint, queried live so server-side changes show up in prompts.
  std::vector<ToolDescriptor> all_tools() const;

  /// Unknown servers produce an is_error result naming UnknownServer; transport
  /// failures are converted into is_error results as well.
  ToolResult call(const ToolCall& call, std::chrono::milliseconds timeout) const;

 private:
  std::map<std::string, std::shared_ptr<ToolEndpoint>> endpoints_;
};

/// Executes calls with results in input order. Calls to distinct servers run concurrently;
/// calls to the same server are issued one after another.
std::vector<ToolResult> call_batch(const ToolRouter& router, std::span<const ToolCall> calls,
                                   std::chrono::milliseconds timeout = 60s);

}  // namespace vicot
