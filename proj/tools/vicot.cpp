// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include <CLI11.hpp>

#include "vicot/cli.hpp"

int main(int argc, char** argv) {
  using namespace vicot::cli;

  CLI::App app{"vicot: stack-based vision reasoning agent"};
  app.require_subcommand(1);

  RunArgs run_args;
  std::string image, config, out_trace;
  std::size_t k = 0, max_rounds = 0;
  std::string backend;
  auto* run_cmd = app.add_subcommand("run", "Answer a query about an image");
  run_cmd->add_option("--image", image, "Input image")->required();
  run_cmd->add_option("--query", run_args.query, "Question or task")->required();
  run_cmd->add_option("--config", config, "TOML config file")->required();
  run_cmd->add_option("--backend", backend, "Override [backend].kind")->check(CLI::IsMember({"scripted", "http"}));
  run_cmd->add_option("--k", k, "Frames kept in the context window")->check(CLI::PositiveNumber);
  run_cmd->add_option("--max-rounds", max_rounds, "Think turns allowed")->check(CLI::PositiveNumber);
  run_cmd->add_option("--out-trace", out_trace, "Write the trajectory record here");
  run_cmd->add_option("--trace-id", run_args.trace_id, "Id of the written record");
  run_cmd->add_flag("--json", run_args.json, "Machine-readable report");

  BenchArgs bench_args;
  long long latency_ns = bench_args.latency_per_token.count();
  auto* bench_cmd = app.add_subcommand("bench", "Stack mode against the plan-replan baseline");
  bench_cmd->add_option("--scenario", bench_args.scenario, "\"synthetic\" or a scenario JSON file");
  bench_cmd->add_option("--k", bench_args.k, "Window size")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--rounds", bench_args.rounds, "Think turns")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--tools", bench_args.tools, "Tool count")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--latency-per-token-ns", latency_ns, "Modeled backend cost per prompt token")
      ->check(CLI::NonNegativeNumber);
  bench_cmd->add_flag("--json", bench_args.json, "Machine-readable table");

  std::string dataset, replay_out;
  bool validate_json = false;
  auto* validate_cmd = app.add_subcommand("validate", "Check a trajectory dataset");
  validate_cmd->add_option("path", dataset, "JSON array or JSON-lines file")->required();
  validate_cmd->add_flag("--json", validate_json, "Machine-readable report");

  auto* replay_cmd = app.add_subcommand("replay", "Re-run recorded trajectories and compare");
  replay_cmd->add_option("path", dataset, "JSON array or JSON-lines file")->required();
  replay_cmd->add_option("--out", replay_out, "Write the re-serialized dataset here");

  auto* stats_cmd = app.add_subcommand("stats", "Dataset statistics");
  stats_cmd->add_option("path", dataset, "JSON array or JSON-lines file")->required();

  TileArgs tile_args;
  std::string tile_image, tile_query;
  auto* tile_cmd = app.add_subcommand("tile", "Split an image into a region grid");
  tile_cmd->add_option("image", tile_image, "PNG image")->required();
  tile_cmd->add_option("--tile-size", tile_args.tile_size, "Tile edge in pixels")->check(CLI::PositiveNumber);
  tile_cmd->add_option("--query", tile_query, "Keep only tiles with matching detections");
  tile_cmd->add_flag("--json", tile_args.json, "Machine-readable grid");

  ConformArgs conform_args;
  std::string conform_script;
  auto* conform_cmd = app.add_subcommand("conform", "Run a scripted session against a stdio tool server");
  conform_cmd->add_option("--server-name", conform_args.server_name, "Server name used in calls");
  conform_cmd->add_option("--script", conform_script, "JSON array of calls")->required();
  conform_cmd->add_option("command", conform_args.command, "Server executable")->required();
  conform_cmd->add_option("args", conform_args.args, "Server arguments");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitFailure;
  }

  if (*run_cmd) {
    run_args.image = image;
    run_args.config = config;
    if (!backend.empty()) run_args.backend = backend;
    if (k) run_args.k = k;
    if (max_rounds) run_args.max_rounds = max_rounds;
    if (!out_trace.empty()) run_args.out_trace = out_trace;
    return cmd_run(run_args, std::cout, std::cerr);
  }
  if (*bench_cmd) {
    bench_args.latency_per_token = std::chrono::nanoseconds(latency_ns);
    return cmd_bench(bench_args, std::cout, std::cerr);
  }
  if (*validate_cmd) return cmd_validate(dataset, validate_json, std::cout, std::cerr);
  if (*replay_cmd) {
    std::optional<fs::path> out;
    if (!replay_out.empty()) out = replay_out;
    return cmd_replay(dataset, out, std::cout, std::cerr);
  }
  if (*stats_cmd) return cmd_stats(dataset, std::cout, std::cerr);
  if (*tile_cmd) {
    tile_args.image = tile_image;
    if (!tile_query.empty()) tile_args.query = tile_query;
    return cmd_tile(tile_args, std::cout, std::cerr);
  }
  if (*conform_cmd) {
    conform_args.script = conform_script;
    return cmd_conform(conform_args, std::cout, std::cerr);
  }
  return kExitFailure;
}
