// SPDX-License-Identifier: Apache-2.0
// Shared helpers for the unit and acceptance suites.
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "vicot/cli.hpp"

namespace vicot::testkit {

namespace fs = std::filesystem;

inline fs::path fixture(const std::string& relative) { return fs::path(VICOT_FIXTURE_DIR) / relative; }
inline std::string test_server() { return VICOT_TEST_SERVER; }
inline std::string cli_binary() { return VICOT_CLI; }

/// Launch spec for the stdio double in `mode`.
LaunchSpec double_spec(const std::string& mode, const std::string& server_name = "double");

/// A scripted scenario that can be run any number of times (backends are rebuilt per run).
struct RandomScenario {
  std::uint64_t seed = 0;
  std::string image_ref;
  std::string query;
  std::string caption;
  /// Think turns, the last one terminal.
  std::vector<std::string> think;
  /// Detailed descriptions for produced files, in call order.
  std::vector<std::string> detailed;
  RunConfig config;
  /// Tool calls that reach a server.
  std::size_t executed_calls = 0;

  Backends backends() const;
  ToolRouter router() const;
  RunReport run() const;
};

struct ScenarioShape {
  std::size_t min_calls = 1;
  std::size_t max_calls = 8;
  /// Allow malformed blocks, duplicate calls, pure-think turns and tool errors.
  bool faults = true;
};

/// Deterministic in `seed`. Tools are the vision half of the remote-sensing set, answered by a
/// handler whose output kind (text, file, error, server vision) is chosen by the "mode" argument.
RandomScenario random_scenario(std::uint64_t seed, const ScenarioShape& shape = {});

/// Runs the scenario, serializes, validates, replays, runs again and serializes again.
/// Returns an empty string when both serializations are byte-identical, else what went wrong.
std::string replay_mismatch(const RandomScenario& scenario);

/// Completed report of the scripted walkthrough in tests/fixtures/walkthrough.
RunReport walkthrough_report();

/// Closed-form context-token totals of the synthetic bench: per round t (1-based),
///   stack:    O_a + min(t-1, k) * F
///   baseline: O_b + (t-1) * F
/// where O_a / O_b are the first-round prompt sizes (instructions, tool listing and origin).
struct BenchOracle {
  std::size_t stack_tokens = 0;
  std::size_t baseline_tokens = 0;
  double reduction = 0.0;
};

BenchOracle bench_oracle(std::size_t rounds, std::size_t k, std::size_t frame_tokens, std::size_t first_round_stack,
                         std::size_t first_round_baseline);

/// Random identifier of [a-z_][a-z0-9_-]*.
std::string random_identifier(std::mt19937_64& rng, std::size_t max_length = 12);
/// Random JSON object up to `depth` levels deep, with string values that include markup characters.
json random_arguments(std::mt19937_64& rng, int depth = 2);

}  // namespace vicot::testkit
