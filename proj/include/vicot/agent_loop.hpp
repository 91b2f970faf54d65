// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vicot/model_gateway.hpp"
#include "vicot/toolcall_codec.hpp"
#include "vicot/transport.hpp"

namespace vicot {

/// Prefix of every error evidence, so the next Think turn can tell failures from results.
inline constexpr std::string_view kErrorMarker = "[error] ";

enum class TerminalMode { soap, end_token, either };

/// What the system turn lists: every tool, or the coarse-to-fine selection for the latest decision.
enum class ToolScope { full, coarse_to_fine };

/// windowed: origin + last k frames. plan_replan: origin + all frames + the full tool set every round.
enum class ContextPolicy { windowed, plan_replan };

enum class Outcome { completed, round_limit, error_aborted };

std::string_view to_string(TerminalMode mode);
TerminalMode terminal_mode_from_string(std::string_view name);
std::string_view to_string(ToolScope scope);
ToolScope tool_scope_from_string(std::string_view name);
std::string_view to_string(Outcome outcome);

/// Scores a branch whose top frame has just been executed. Higher is better.
using BranchScorer = std::function<double(const ReasoningStack&)>;

struct RunConfig {
  std::size_t k = 3;
  /// Think turns allowed.
  std::size_t max_rounds = 12;
  /// 1 disables branching.
  std::size_t max_width = 1;
  /// Consecutive error evidences before the run is aborted.
  std::size_t retry_limit = 3;
  TerminalMode terminal_mode = TerminalMode::either;
  /// Collect per-round statistics.
  bool accounting = true;
  ToolScope tool_scope = ToolScope::full;
  ContextPolicy context_policy = ContextPolicy::windowed;
  /// Ask the Vision backend to describe the first file produced by each successful call.
  bool describe_tool_outputs = false;
  /// Two candidate tools are equally plausible when their match scores differ by at most this.
  double plausibility_margin = 0.1;
  std::chrono::milliseconds call_timeout{60000};
  /// Throw Precondition when the input image file is missing. Replay of recorded runs turns this off.
  bool require_image = true;
  /// Used verbatim as the system turn when set (trace replay).
  std::optional<std::string> system_text;
  Templates templates = Templates::defaults();
  /// Defaults to heuristic_branch_score.
  BranchScorer scorer;

  /// Throws Precondition on k, max_rounds or retry_limit below 1.
  void validate() const;
};

struct Backends {
  std::shared_ptr<ModelBackend> think;
  std::shared_ptr<ModelBackend> vision;
};

struct RoundStats {
  std::size_t round = 0;
  std::size_t prompt_tokens = 0;
  /// Part of prompt_tokens spent on the system turn (instructions and tool listing).
  std::size_t system_tokens = 0;
  std::size_t completion_tokens = 0;
  std::size_t tool_calls = 0;
  /// Tool descriptions placed in the prompt this round.
  std::size_t tool_scans = 0;
  std::chrono::microseconds latency{0};
};

struct RunTotals {
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  std::size_t tool_calls = 0;
  std::size_t tool_scans = 0;
  std::chrono::microseconds wall_time{0};
};

struct RunReport {
  /// Parsed terminal output; absent unless the outcome is completed.
  std::optional<StructuredOutput> final;
  ReasoningStack stack;
  /// Think turns taken.
  std::size_t rounds = 0;
  RunTotals totals;
  std::vector<RoundStats> per_round;
  Outcome outcome = Outcome::round_limit;
  /// System turn of the first round.
  std::string system_text;
  /// Identifies the scripted scenario for account().
  std::string scenario;
  /// Why the loop stopped early, when it did.
  std::string note;
};

/// Evidence for a failed tool result: the verbatim error text behind kErrorMarker.
/// Throws Precondition when the result is not an error.
Evidence feedback_error(const ToolResult& result);

/// Error evidence produced by the host itself (codec errors, duplicate calls).
Evidence host_feedback(const std::string& message);

/// Evidence for a successful result, optionally carrying a host-side Vision description.
Evidence make_evidence(const ToolResult& result, const std::optional<std::string>& gateway_description = {});

/// Alternatives to `call`: tools whose match score is within the margin of the best one and
/// whose required arguments are all present in the call, as calls with the same arguments.
std::vector<ToolCall> plausible_alternatives(std::string_view decision, const ToolCall& call,
                                             std::span<const ToolDescriptor> tools, double margin);

/// One point per property: evidence is not an error, the call satisfies its tool's schema,
/// and the tool was not used earlier in the stack.
double heuristic_branch_score(const ReasoningStack& stack, std::span<const ToolDescriptor> tools);

/// Asks the Think backend for a 0..1 rating of the branch; unparsable replies score 0.
BranchScorer make_judge_scorer(std::shared_ptr<ModelBackend> backend);

/// System-turn tool listing for `scope`, selected for `decision` under coarse_to_fine.
std::string render_tool_scope(ToolScope scope, std::string_view decision, std::span<const ToolDescriptor> tools,
                              double margin);

/// The stack-based reasoning loop.
RunReport run(const std::string& image_ref, const std::string& query, const ToolRouter& router,
              const Backends& backends, const RunConfig& config);

/// Reference baseline: full history and the whole tool set in every prompt.
RunReport run_plan_replan_baseline(const std::string& image_ref, const std::string& query, const ToolRouter& router,
                                   const Backends& backends, RunConfig config);

struct ComparisonRow {
  std::size_t round = 0;
  std::size_t prompt_tokens_a = 0;
  std::size_t prompt_tokens_b = 0;
};

/// Report A measured against report B. Reductions are 1 - a/b (0 when b is 0).
struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  std::size_t prompt_tokens_a = 0;
  std::size_t prompt_tokens_b = 0;
  std::size_t tool_calls_a = 0;
  std::size_t tool_calls_b = 0;
  std::size_t tool_scans_a = 0;
  std::size_t tool_scans_b = 0;
  /// Prompt tokens outside the system turn: origin and frames.
  std::size_t history_tokens_a = 0;
  std::size_t history_tokens_b = 0;
  std::chrono::microseconds latency_a{0};
  std::chrono::microseconds latency_b{0};
  double token_reduction = 0.0;
  double history_reduction = 0.0;
  double latency_reduction = 0.0;

  json to_json() const;
};

/// Throws ScenarioMismatch unless both reports carry the same scenario id and round count.
ComparisonTable account(const RunReport& a, const RunReport& b);

}  // namespace vicot
