// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vicot/agent_loop.hpp"
#include "vicot/trace_store.hpp"
#include "vicot/uhr_tiler.hpp"

namespace vicot::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kExitOk = 0,
  /// validate/replay found problems in the data.
  kExitViolations = 1,
  /// Config, I/O, spawn or argument errors.
  kExitFailure = 2,
  kExitRoundLimit = 3,
  kExitAborted = 4,
};

struct BackendConfig {
  /// "scripted" or "http".
  std::string kind = "scripted";
  /// Scripted: ScriptedBackend::from_json file feeding both Think and Vision.
  fs::path script;
  HttpChatConfig think;
  /// Http: separate Vision endpoint; defaults to the Think one.
  std::optional<HttpChatConfig> vision;
};

struct ServerConfig {
  enum class Kind { spawn, builtin, scripted };

  std::string name;
  Kind kind = Kind::spawn;
  LaunchSpec launch;
  /// Builtin: "desk" (in-process vision tool doubles).
  std::string builtin;
  /// Scripted: a JSON array of result payloads, or an object whose "tools" maps server names to arrays.
  fs::path scripted;
};

struct AppConfig {
  RunConfig run;
  BackendConfig backend;
  std::vector<ServerConfig> servers;
  std::chrono::milliseconds handshake_timeout{10000};
};

/// TOML with [run], [backend] and [servers.<name>] tables. Relative paths resolve against base_dir.
/// Throws Config.
AppConfig parse_config(std::string_view toml_text, const fs::path& base_dir);
/// Throws Io when the file cannot be read, Config when it does not parse.
AppConfig load_config(const fs::path& path);

Backends make_backends(const BackendConfig& config);
/// Starts every configured server. Throws SpawnFailed, HandshakeTimeout, Config or Io.
ToolRouter make_router(const AppConfig& config);

struct RunArgs {
  fs::path image;
  std::string query;
  fs::path config;
  /// Overrides [backend].kind.
  std::optional<std::string> backend;
  std::optional<std::size_t> k;
  std::optional<std::size_t> max_rounds;
  std::optional<fs::path> out_trace;
  std::string trace_id = "run";
  bool json = false;
};

/// Exit 0 completed, 3 round limit, 4 aborted, 2 on config, spawn or input errors.
int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err);

struct BenchArgs {
  /// "synthetic", or a JSON file with any of "rounds", "tools", "k".
  std::string scenario = "synthetic";
  std::size_t k = 3;
  std::size_t rounds = 10;
  std::size_t tools = 10;
  /// Modeled backend cost per prompt token.
  std::chrono::nanoseconds latency_per_token{2000};
  bool json = false;
};

/// Byte sizes of the synthetic scenario. Every frame renders to kBenchFrameTokens estimated tokens.
inline constexpr std::size_t kBenchDecisionBytes = 240;
inline constexpr std::size_t kBenchEvidenceBytes = 160;
inline constexpr std::size_t kBenchFrameTokens = (kBenchDecisionBytes + kBenchEvidenceBytes) / 4;
inline constexpr std::string_view kBenchServer = "bench";
inline constexpr std::string_view kBenchQuery = "Start with tool_00 op00.";
inline constexpr std::string_view kBenchCaption = "Synthetic scene.";

/// tool_00 .. tool_<n-1>: equally sized descriptors, each with one distinguishing word "opNN".
std::vector<ToolDescriptor> bench_tools(std::size_t count);

struct BenchOutcome {
  RunReport stack;
  RunReport baseline;
  ComparisonTable table;
};

/// Stack mode (window k, coarse-to-fine tool listing) against the plan-replan baseline on the
/// synthetic scenario: rounds-1 tool calls, then a SOAP answer. Throws Precondition on bad sizes.
BenchOutcome run_bench(const BenchArgs& args);

/// Exit 2 on a bad scenario.
int cmd_bench(const BenchArgs& args, std::ostream& out, std::ostream& err);

/// Exit 0 valid, 1 violations, 2 I/O error.
int cmd_validate(const fs::path& path, bool json, std::ostream& out, std::ostream& err);

/// Replays every record and serializes it again. Writes the re-serialized dataset to `out_path`
/// when given. Exit 0 when every record reproduces byte-identically, 1 otherwise, 2 on I/O errors.
int cmd_replay(const fs::path& path, const std::optional<fs::path>& out_path, std::ostream& out,
               std::ostream& err);

/// Dataset statistics as JSON. Exit codes as cmd_validate.
int cmd_stats(const fs::path& path, std::ostream& out, std::ostream& err);

struct TileArgs {
  fs::path image;
  int tile_size = kDefaultTileSize;
  /// When set, tiles are filtered with the desk detector (sidecar annotations) for this instruction.
  std::optional<std::string> query;
  bool json = false;
};

/// Prints "<rows>×<cols> grid" and one line per tile, plus the kept-tile report with a query.
int cmd_tile(const TileArgs& args, std::ostream& out, std::ostream& err);

struct ConformArgs {
  std::string server_name = "mcp_vision_server";
  std::string command;
  std::vector<std::string> args;
  /// JSON array of {"tool_name", "arguments"} objects, sent in order after list_tools.
  fs::path script;
};

/// Spawns a tool server, sends list_tools and the scripted calls, then prints the wire transcript
/// (one frame per line). Exit 0 when every call got a result, 1 when one failed at the transport
/// level, 2 on spawn, handshake or script errors.
int cmd_conform(const ConformArgs& args, std::ostream& out, std::ostream& err);

}  // namespace vicot::cli
