// SPDX-License-Identifier: Apache-2.0
#include "vicot/transport.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <set>

extern char** environ;

namespace vicot {
namespace {

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

void close_fd(int& fd) {
  if (fd >= 0) {
    ::close(fd);
    fd = -1;
  }
}

struct Pipe {
  int read = -1;
  int write = -1;
  Pipe() {
    int fds[2];
    if (::pipe2(fds, O_CLOEXEC) != 0) throw Error(ErrorCode::SpawnFailed, std::string("pipe: ") + std::strerror(errno));
    read = fds[0];
    write = fds[1];
  }
};

std::vector<std::string> build_environment(const std::map<std::string, std::string>& overrides) {
  std::vector<std::string> env;
  for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
    std::string entry(*e);
    const auto eq = entry.find('=');
    if (eq != std::string::npos && overrides.count(entry.substr(0, eq))) continue;
    env.push_back(std::move(entry));
  }
  for (const auto& [k, v] : overrides) env.push_back(k + "=" + v);
  return env;
}

std::vector<ToolDescriptor> descriptors_from_wire(const json& tools, const std::string& server_name) {
  std::vector<ToolDescriptor> out;
  if (!tools.is_array()) return out;
  for (const auto& t : tools) {
    ToolDescriptor d = t.get<ToolDescriptor>();
    d.server_name = server_name;
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace

std::string_view to_string(ServerState state) {
  switch (state) {
    case ServerState::spawned: return "spawned";
    case ServerState::ready: return "ready";
    case ServerState::failed: return "failed";
    case ServerState::closed: return "closed";
  }
  return "unknown";
}

StdioServer::StdioServer(LaunchSpec spec, TransportOptions options)
    : spec_(std::move(spec)), options_(options) {}

std::shared_ptr<StdioServer> StdioServer::spawn(LaunchSpec spec, TransportOptions options) {
  ignore_sigpipe();
  std::shared_ptr<StdioServer> server(new StdioServer(std::move(spec), options));
  const LaunchSpec& ls = server->spec_;
  if (ls.command.empty()) throw Error(ErrorCode::SpawnFailed, "empty command for server '" + ls.server_name + "'");

  Pipe in, out, err;
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in.read, STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, out.write, STDOUT_FILENO);
  posix_spawn_file_actions_adddup2(&actions, err.write, STDERR_FILENO);
  if (!ls.working_dir.empty()) posix_spawn_file_actions_addchdir_np(&actions, ls.working_dir.c_str());

  std::vector<std::string> argv_storage;
  argv_storage.push_back(ls.command);
  argv_storage.insert(argv_storage.end(), ls.args.begin(), ls.args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());
  argv.push_back(nullptr);
  auto env_storage = build_environment(ls.env);
  std::vector<char*> envp;
  for (auto& e : env_storage) envp.push_back(e.data());
  envp.push_back(nullptr);

  pid_t pid = -1;
  const int rc = ::posix_spawnp(&pid, ls.command.c_str(), &actions, nullptr, argv.data(), envp.data());
  posix_spawn_file_actions_destroy(&actions);
  ::close(in.read);
  ::close(out.write);
  ::close(err.write);
  if (rc != 0) {
    ::close(in.write);
    ::close(out.read);
    ::close(err.read);
    throw Error(ErrorCode::SpawnFailed, "cannot start '" + ls.command + "': " + std::strerror(rc));
  }
  server->pid_ = pid;
  server->stdin_fd_ = in.write;
  server->stdout_fd_ = out.read;
  server->stderr_fd_ = err.read;
  server->reader_ = std::thread([s = server.get()] { s->reader_loop(); });
  server->stderr_reader_ = std::thread([s = server.get()] { s->stderr_loop(); });

  auto hello = server->hello_.get_future();
  try {
    server->write_frame({{"id", 0}, {"kind", "hello"}, {"payload", {{"protocol_version", kProtocolVersion}}}});
  } catch (const Error&) {
    // the child died before reading; the reader reports it through the hello promise
  }
  if (hello.wait_for(options.handshake_timeout) != std::future_status::ready) {
    server->close();
    throw Error(ErrorCode::HandshakeTimeout, "server '" + ls.server_name + "' did not answer hello within " +
                                                 std::to_string(options.handshake_timeout.count()) + " ms");
  }
  json payload;
  try {
    payload = hello.get();
  } catch (const Error& e) {
    server->close();
    throw Error(ErrorCode::SpawnFailed, "server '" + ls.server_name + "' exited during handshake: " + e.what());
  }
  std::lock_guard lock(server->mutex_);
  if (payload.value("protocol_version", 0) != kProtocolVersion) {
    server->state_ = ServerState::failed;
    return server;
  }
  server->tools_ = descriptors_from_wire(payload.value("tools", json::array()), ls.server_name);
  server->state_ = ServerState::ready;
  return server;
}

StdioServer::~StdioServer() { close(); }

ServerState StdioServer::state() const {
  std::lock_guard lock(mutex_);
  return state_;
}

std::vector<ToolDescriptor> StdioServer::discovered_tools() const {
  std::lock_guard lock(mutex_);
  return tools_;
}

void StdioServer::write_frame(const json& frame) {
  std::string line = frame.dump();
  {
    std::lock_guard lock(mutex_);
    transcript_.push_back("> " + line);
  }
  line += '\n';
  std::lock_guard wlock(write_mutex_);
  std::size_t written = 0;
  while (written < line.size()) {
    if (stdin_fd_ < 0) throw Error(ErrorCode::TransportClosed, "server '" + spec_.server_name + "' stdin is closed");
    const auto n = ::write(stdin_fd_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::TransportClosed, "write to '" + spec_.server_name + "' failed: " + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }
}

json StdioServer::request(const std::string& kind, json payload, std::chrono::milliseconds timeout) {
  const auto id = next_id_.fetch_add(1);
  std::future<json> response;
  {
    std::lock_guard lock(mutex_);
    if (state_ != ServerState::ready) {
      throw Error(ErrorCode::TransportClosed,
                  "server '" + spec_.server_name + "' is " + std::string(to_string(state_)));
    }
    response = pending_[id].get_future();
  }
  try {
    write_frame({{"id", id}, {"kind", kind}, {"payload", std::move(payload)}});
  } catch (...) {
    std::lock_guard lock(mutex_);
    pending_.erase(id);
    throw;
  }
  if (response.wait_for(timeout) != std::future_status::ready) {
    std::lock_guard lock(mutex_);
    pending_.erase(id);
    throw Error(ErrorCode::Timeout, kind + " #" + std::to_string(id) + " to '" + spec_.server_name +
                                        "' timed out after " + std::to_string(timeout.count()) + " ms");
  }
  return response.get();
}

std::vector<ToolDescriptor> StdioServer::list_tools() {
  const json payload = request("list_tools", json::object(), options_.call_timeout);
  auto tools = descriptors_from_wire(payload.value("tools", json::array()), spec_.server_name);
  std::lock_guard lock(mutex_);
  tools_ = tools;
  return tools;
}

ToolResult StdioServer::call_tool(const ToolCall& call, std::chrono::milliseconds timeout) {
  if (call.server_name != spec_.server_name) {
    throw Error(ErrorCode::WrongServer,
                "call for '" + call.server_name + "' sent to server '" + spec_.server_name + "'");
  }
  const auto start = std::chrono::steady_clock::now();
  const json payload = request("call_tool", {{"name", call.tool_name}, {"arguments", call.arguments}}, timeout);
  ToolResult result = ToolResult::from_payload(payload);
  result.elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
  return result;
}

void StdioServer::reader_loop() {
  std::string buffer;
  char chunk[4096];
  while (true) {
    const auto n = ::read(stdout_fd_, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t nl;
    while ((nl = buffer.find('\n')) != std::string::npos) {
      std::string line = buffer.substr(0, nl);
      buffer.erase(0, nl + 1);
      if (line.empty()) continue;
      json frame;
      try {
        frame = json::parse(line);
      } catch (const json::parse_error&) {
        std::lock_guard lock(mutex_);
        transcript_.push_back("< " + line);
        stderr_ += "[host] unparseable frame: " + line + "\n";
        continue;
      }
      std::lock_guard lock(mutex_);
      transcript_.push_back("< " + frame.dump());
      const auto kind = frame.value("kind", std::string{});
      const json payload = frame.value("payload", json::object());
      if (kind == "hello") {
        if (!hello_seen_) {
          hello_seen_ = true;
          hello_.set_value(payload);
        }
        continue;
      }
      const auto& id = frame["id"];
      if (!id.is_number_unsigned() && !id.is_number_integer()) {
        ++orphans_;
        continue;
      }
      auto it = pending_.find(id.get<std::uint64_t>());
      if (it == pending_.end()) {
        ++orphans_;
        continue;
      }
      it->second.set_value(payload);
      pending_.erase(it);
    }
  }
  fail_pending("server '" + spec_.server_name + "' closed its output");
}

void StdioServer::stderr_loop() {
  char chunk[4096];
  while (true) {
    const auto n = ::read(stderr_fd_, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    std::lock_guard lock(mutex_);
    stderr_.append(chunk, static_cast<std::size_t>(n));
  }
}

void StdioServer::fail_pending(const std::string& why) {
  std::lock_guard lock(mutex_);
  if (state_ != ServerState::closed) state_ = ServerState::failed;
  for (auto& [id, promise] : pending_) {
    promise.set_exception(std::make_exception_ptr(Error(ErrorCode::TransportClosed, why)));
  }
  pending_.clear();
  if (!hello_seen_) {
    hello_seen_ = true;
    hello_.set_exception(std::make_exception_ptr(Error(ErrorCode::TransportClosed, why)));
  }
}

void StdioServer::reap() {
  if (pid_ <= 0) return;
  for (int i = 0; i < 50; ++i) {
    if (::waitpid(pid_, nullptr, WNOHANG) == pid_) {
      pid_ = -1;
      return;
    }
    std::this_thread::sleep_for(10ms);
  }
  ::kill(pid_, SIGKILL);
  ::waitpid(pid_, nullptr, 0);
  pid_ = -1;
}

void StdioServer::close() {
  {
    std::lock_guard lock(mutex_);
    if (state_ == ServerState::closed && pid_ < 0) return;
    state_ = ServerState::closed;
  }
  {
    std::lock_guard wlock(write_mutex_);
    close_fd(stdin_fd_);
  }
  reap();
  if (reader_.joinable()) reader_.join();
  if (stderr_reader_.joinable()) stderr_reader_.join();
  close_fd(stdout_fd_);
  close_fd(stderr_fd_);
}

std::vector<std::string> StdioServer::transcript() const {
  std::lock_guard lock(mutex_);
  return transcript_;
}

std::string StdioServer::stderr_log() const {
  std::lock_guard lock(mutex_);
  return stderr_;
}

void ToolRouter::add(std::shared_ptr<ToolEndpoint> endpoint) {
  const auto name = endpoint->server_name();
  endpoints_[name] = std::move(endpoint);
}

std::shared_ptr<ToolEndpoint> ToolRouter::find(const std::string& server_name) const {
  auto it = endpoints_.find(server_name);
  return it == endpoints_.end() ? nullptr : it->second;
}

std::vector<std::string> ToolRouter::server_names() const {
  std::vector<std::string> names;
  for (const auto& [name, _] : endpoints_) names.push_back(name);
  return names;
}

std::vector<ToolDescriptor> ToolRouter::all_tools() const {
  std::vector<ToolDescriptor> tools;
  for (const auto& [name, endpoint] : endpoints_) {
    auto listed = endpoint->list_tools();
    tools.insert(tools.end(), listed.begin(), listed.end());
  }
  return tools;
}

ToolResult ToolRouter::call(const ToolCall& call, std::chrono::milliseconds timeout) const {
  auto endpoint = find(call.server_name);
  if (!endpoint) {
    return ToolResult::error("Error: UnknownServer: no tool server named '" + call.server_name + "'");
  }
  try {
    return endpoint->call_tool(call, timeout);
  } catch (const Error& e) {
    return ToolResult::error(std::string("Error: ") + e.what());
  }
}

std::vector<ToolResult> call_batch(const ToolRouter& router, std::span<const ToolCall> calls,
                                   std::chrono::milliseconds timeout) {
  std::vector<ToolResult> results(calls.size());
  std::map<std::string, std::vector<std::size_t>> by_server;
  for (std::size_t i = 0; i < calls.size(); ++i) {
    if (!router.find(calls[i].server_name)) {
      results[i] = router.call(calls[i], timeout);
    } else {
      by_server[calls[i].server_name].push_back(i);
    }
  }
  std::vector<std::future<void>> workers;
  for (const auto& [server, indices] : by_server) {
    workers.push_back(std::async(std::launch::async, [&, indices = indices] {
      for (auto i : indices) results[i] = router.call(calls[i], timeout);
    }));
  }
  for (auto& w : workers) w.get();
  return results;
}

}  // namespace vicot
