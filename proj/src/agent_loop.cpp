// SPDX-License-Identifier: Apache-2.0
#include "vicot/agent_loop.hpp"

#include <algorithm>
#include <cstdio>
#include <future>
#include <regex>
#include <set>

namespace vicot {
namespace {

using Clock = std::chrono::steady_clock;

std::chrono::microseconds since(Clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - start);
}

std::string call_key(const ToolCall& call) {
  return call.server_name + '\n' + call.tool_name + '\n' + call.arguments.dump();
}

std::string scenario_id(const std::string& image_ref, const std::string& query, const std::string& caption) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const std::string* part : {&image_ref, &query, &caption}) {
    for (unsigned char c : *part) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

bool accepts(TerminalMode mode, StructuredKind kind) {
  switch (mode) {
    case TerminalMode::soap: return kind == StructuredKind::soap;
    case TerminalMode::end_token: return kind == StructuredKind::end_token;
    case TerminalMode::either: return true;
  }
  return true;
}

ReasoningFrame make_frame(std::size_t index, std::string decision, std::optional<ToolCall> match,
                          std::optional<Evidence> evidence, std::vector<ToolCall> alternatives = {}) {
  ReasoningFrame frame;
  frame.index = index;
  frame.decision = std::move(decision);
  frame.match = std::move(match);
  frame.evidence = std::move(evidence);
  frame.discover_state = std::move(alternatives);
  frame.token_count = ReasoningFrame::count_tokens(frame.decision, frame.evidence);
  return frame;
}

/// Executes calls and turns their results into evidence.
class Executor {
 public:
  Executor(const ToolRouter& router, const Backends& backends, const RunConfig& config)
      : router_(router), backends_(backends), config_(config) {}

  Evidence execute(const ToolCall& call) const {
    ToolResult result = router_.call(call, config_.call_timeout);
    if (result.is_error) return feedback_error(result);
    std::optional<std::string> description;
    const auto paths = result.paths();
    if (config_.describe_tool_outputs && backends_.vision && !paths.empty()) {
      description = describe_unchecked(*backends_.vision, paths.front(), DescribeMode::detailed, result.text(),
                                       config_.templates)
                        .text;
    }
    return make_evidence(result, description);
  }

 private:
  const ToolRouter& router_;
  const Backends& backends_;
  const RunConfig& config_;
};

std::vector<ToolDescriptor> coarse_selection(std::string_view decision, std::span<const ToolDescriptor> tools,
                                             double margin) {
  const auto matches = match_tools(decision, tools);
  std::vector<ToolDescriptor> selected;
  const double best = matches.front().score;
  for (const auto& m : matches) {
    if (selected.empty() || m.score >= best - margin) selected.push_back(m.tool);
  }
  return selected;
}

}  // namespace

std::string_view to_string(TerminalMode mode) {
  switch (mode) {
    case TerminalMode::soap: return "soap";
    case TerminalMode::end_token: return "end_token";
    case TerminalMode::either: return "either";
  }
  return "either";
}

TerminalMode terminal_mode_from_string(std::string_view name) {
  if (name == "soap") return TerminalMode::soap;
  if (name == "end_token") return TerminalMode::end_token;
  if (name == "either") return TerminalMode::either;
  throw Error(ErrorCode::Config, "terminal_mode must be soap, end_token or either, got '" + std::string(name) + "'");
}

std::string_view to_string(ToolScope scope) {
  return scope == ToolScope::full ? "full" : "coarse_to_fine";
}

ToolScope tool_scope_from_string(std::string_view name) {
  if (name == "full") return ToolScope::full;
  if (name == "coarse_to_fine") return ToolScope::coarse_to_fine;
  throw Error(ErrorCode::Config, "tool_scope must be full or coarse_to_fine, got '" + std::string(name) + "'");
}

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::completed: return "completed";
    case Outcome::round_limit: return "round_limit";
    case Outcome::error_aborted: return "error_aborted";
  }
  return "round_limit";
}

void RunConfig::validate() const {
  if (k < 1) throw Error(ErrorCode::Precondition, "k must be at least 1");
  if (max_rounds < 1) throw Error(ErrorCode::Precondition, "max_rounds must be at least 1");
  if (retry_limit < 1) throw Error(ErrorCode::Precondition, "retry_limit must be at least 1");
  if (max_width < 1) throw Error(ErrorCode::Precondition, "max_width must be at least 1");
}

Evidence feedback_error(const ToolResult& result) {
  if (!result.is_error) throw Error(ErrorCode::Precondition, "feedback_error needs an error result");
  Evidence evidence;
  const std::string text = result.text();
  evidence.text = std::string(kErrorMarker) + (text.empty() ? "tool reported an error without a message" : text);
  evidence.file_paths = result.paths();
  evidence.is_error = true;
  evidence.source = EvidenceSource::tool;
  evidence.payload = result.to_payload().dump();
  return evidence;
}

Evidence host_feedback(const std::string& message) {
  Evidence evidence;
  evidence.text = std::string(kErrorMarker) + message;
  evidence.is_error = true;
  evidence.source = EvidenceSource::host_feedback;
  json payload = ToolResult::error(message).to_payload();
  payload["origin"] = "host";
  evidence.payload = payload.dump();
  return evidence;
}

Evidence make_evidence(const ToolResult& result, const std::optional<std::string>& gateway_description) {
  Evidence evidence;
  std::vector<std::string> parts;
  if (auto text = result.text(); !text.empty()) parts.push_back(std::move(text));
  evidence.file_paths = result.paths();
  if (!evidence.file_paths.empty()) {
    std::string files = "Result files:";
    for (const auto& path : evidence.file_paths) files += " " + path;
    parts.push_back(std::move(files));
  }
  if (result.vlm_response) parts.push_back("Vision description:\n" + *result.vlm_response);
  if (gateway_description) parts.push_back("Vision description:\n" + *gateway_description);
  for (std::size_t i = 0; i < parts.size(); ++i) evidence.text += (i ? "\n\n" : "") + parts[i];
  if (evidence.text.empty()) evidence.text = "(no output)";
  evidence.is_error = result.is_error;
  evidence.source = gateway_description ? EvidenceSource::gateway_vision
                    : result.vlm_response ? EvidenceSource::server_vision
                                          : EvidenceSource::tool;
  json payload = result.to_payload();
  if (gateway_description) payload["gateway_vlm_response"] = *gateway_description;
  evidence.payload = payload.dump();
  return evidence;
}

std::vector<ToolCall> plausible_alternatives(std::string_view decision, const ToolCall& call,
                                             std::span<const ToolDescriptor> tools, double margin) {
  if (tools.empty()) return {};
  const auto matches = match_tools(decision, tools);
  const double best = matches.front().score;
  std::vector<ToolCall> out;
  for (const auto& m : matches) {
    if (m.score <= 0.0 || m.score < best - margin) continue;
    if (m.tool.tool_name == call.tool_name && m.tool.server_name == call.server_name) continue;
    if (!arguments_satisfy(m.tool, call.arguments)) continue;
    out.push_back(ToolCall{m.tool.server_name, m.tool.tool_name, call.arguments, {}});
  }
  return out;
}

double heuristic_branch_score(const ReasoningStack& stack, std::span<const ToolDescriptor> tools) {
  if (stack.empty()) return 0.0;
  const auto& top = stack.top();
  double score = 0.0;
  if (top.evidence && !top.evidence->is_error) score += 1.0;
  if (top.match) {
    auto tool = std::find_if(tools.begin(), tools.end(), [&](const ToolDescriptor& t) {
      return t.tool_name == top.match->tool_name && t.server_name == top.match->server_name;
    });
    if (tool != tools.end() && arguments_satisfy(*tool, top.match->arguments)) score += 1.0;
    const auto earlier = stack.frames().first(stack.size() - 1);
    const bool novel = std::none_of(earlier.begin(), earlier.end(), [&](const ReasoningFrame& f) {
      return f.match && f.match->tool_name == top.match->tool_name;
    });
    if (novel) score += 1.0;
  }
  return score;
}

BranchScorer make_judge_scorer(std::shared_ptr<ModelBackend> backend) {
  return [backend = std::move(backend)](const ReasoningStack& stack) {
    PromptBundle bundle;
    bundle.turns.push_back({Role::system,
                            "Rate how much the last tool result advances the task. Reply with one number between 0 "
                            "and 1."});
    std::string body = "Task: " + stack.origin().query + "\n";
    if (!stack.empty()) {
      for (const auto& turn : render_frame(stack.top())) body += "\n" + turn.content;
    }
    bundle.turns.push_back({Role::user, body});
    const auto reply = think(*backend, bundle).text;
    static const std::regex kNumber(R"([-+]?\d*\.?\d+)");
    std::smatch m;
    if (!std::regex_search(reply, m, kNumber)) return 0.0;
    return std::clamp(std::stod(m.str()), 0.0, 1.0);
  };
}

std::string render_tool_scope(ToolScope scope, std::string_view decision, std::span<const ToolDescriptor> tools,
                              double margin) {
  if (tools.empty()) return generate_tool_xml(tools);
  if (scope == ToolScope::full) return generate_tool_xml(tools);
  const auto selected = coarse_selection(decision, tools, margin);
  std::vector<std::string> others;
  for (const auto& t : tools) {
    const bool chosen = std::any_of(selected.begin(), selected.end(), [&](const ToolDescriptor& s) {
      return s.tool_name == t.tool_name && s.server_name == t.server_name;
    });
    if (!chosen) others.push_back(t.tool_name);
  }
  std::sort(others.begin(), others.end());
  std::string out = generate_tool_xml(selected);
  if (!others.empty()) {
    out += "Other tools:";
    for (const auto& name : others) out += " " + name;
    out += "\n";
  }
  return out;
}

RunReport run(const std::string& image_ref, const std::string& query, const ToolRouter& router,
              const Backends& backends, const RunConfig& config) {
  config.validate();
  if (!backends.think || !backends.vision) throw Error(ErrorCode::Precondition, "run needs think and vision backends");
  const auto start = Clock::now();

  std::vector<ToolDescriptor> tools;
  try {
    tools = router.all_tools();
  } catch (const Error& e) {
    throw Error(ErrorCode::ToolServerUnavailable, e.what());
  }

  RunReport report;
  const ModelTurn caption =
      config.require_image
          ? describe(*backends.vision, image_ref, DescribeMode::rough, query, config.templates)
          : describe_unchecked(*backends.vision, image_ref, DescribeMode::rough, query, config.templates);
  report.totals.prompt_tokens += caption.prompt_tokens;
  report.totals.completion_tokens += caption.completion_tokens;
  report.scenario = scenario_id(image_ref, query, caption.text);

  ReasoningStack stack(Origin{query, image_ref, caption.text});
  const Executor executor(router, backends, config);
  const BranchScorer scorer =
      config.scorer ? config.scorer : [&tools](const ReasoningStack& s) { return heuristic_branch_score(s, tools); };

  std::size_t consecutive_errors = 0;
  std::size_t consecutive_pure = 0;
  std::optional<ToolCall> last_issued;
  std::set<std::string> explored;
  bool stopped = false;

  auto note_error = [&](const Evidence& evidence) {
    consecutive_errors = evidence.is_error ? consecutive_errors + 1 : 0;
  };

  while (!stopped && report.rounds < config.max_rounds) {
    ++report.rounds;
    RoundStats stats;
    stats.round = report.rounds;

    const bool replan = config.context_policy == ContextPolicy::plan_replan;
    const ToolScope scope = replan ? ToolScope::full : config.tool_scope;
    const std::string selector = stack.empty() ? query + "\n" + stack.origin().caption : stack.top().decision;
    const std::string tools_xml = render_tool_scope(scope, selector, tools, config.plausibility_margin);
    stats.tool_scans = scope == ToolScope::full || tools.empty()
                           ? tools.size()
                           : coarse_selection(selector, tools, config.plausibility_margin).size();
    const PromptBundle bundle = replan ? assemble_full_context(stack, config.templates, tools_xml, config.system_text)
                                       : assemble_context(stack, config.k, config.templates, tools_xml, config.system_text);
    if (report.rounds == 1) report.system_text = bundle.system_text();
    stats.system_tokens = estimate_tokens(bundle.system_text());

    const ModelTurn turn = think(*backends.think, bundle);
    stats.prompt_tokens = turn.prompt_tokens;
    stats.completion_tokens = turn.completion_tokens;
    stats.latency = turn.latency;
    const std::string& text = turn.text;
    const std::size_t index = stack.size();

    std::optional<StructuredOutput> structured;
    std::optional<Evidence> codec_feedback;
    try {
      structured = parse_structured_output(text);
    } catch (const Error& e) {
      codec_feedback = host_feedback(e.what());
    }
    if (structured && accepts(config.terminal_mode, structured->kind)) {
      stack.push(make_frame(index, text, std::nullopt, std::nullopt));
      report.final = std::move(structured);
      report.outcome = Outcome::completed;
      stopped = true;
    } else {
      std::optional<ToolCall> call;
      if (!codec_feedback) {
        try {
          call = parse_tool_call(text);
        } catch (const Error& e) {
          codec_feedback = host_feedback(e.what());
        }
      }

      if (codec_feedback) {
        note_error(*codec_feedback);
        stack.push(make_frame(index, text, std::nullopt, std::move(codec_feedback)));
        consecutive_pure = 0;
      } else if (call) {
        consecutive_pure = 0;
        const std::string think_text = strip_think(text).think;
        auto alternatives = plausible_alternatives(think_text.empty() ? text : think_text, *call, tools,
                                                   config.plausibility_margin);
        if (last_issued && *last_issued == *call) {
          Evidence evidence = host_feedback("duplicate call: " + call->tool_name +
                                            " was just called with exactly these arguments; change the arguments "
                                            "or choose another tool");
          note_error(evidence);
          stack.push(make_frame(index, text, call, std::move(evidence), std::move(alternatives)));
        } else if (config.max_width > 1 && !alternatives.empty()) {
          std::vector<ToolCall> candidates{*call};
          candidates.insert(candidates.end(), alternatives.begin(), alternatives.end());
          ReasoningStack pending = stack;
          pending.push(make_frame(index, text, call, std::nullopt, alternatives));
          StackPool pool = branch(pending, candidates, config.max_width);

          std::vector<std::future<Evidence>> running;
          for (const auto& b : pool.branches) {
            running.push_back(std::async(std::launch::async, [&executor, c = *b.top().match] {
              return executor.execute(c);
            }));
          }
          std::map<BranchId, double> scores;
          for (std::size_t i = 0; i < pool.branches.size(); ++i) {
            auto& b = pool.branches[i];
            ReasoningFrame top = b.top();
            std::vector<ToolCall> rest;
            for (const auto& c : candidates) {
              if (!(c == *top.match)) rest.push_back(c);
            }
            ReasoningStack advanced = b.prefix(b.size() - 1);
            advanced.push(make_frame(index, top.decision, top.match, running[i].get(), std::move(rest)));
            advanced.set_branch_id(b.branch_id());
            scores[b.branch_id()] = scorer(advanced);
            b = std::move(advanced);
            explored.insert(call_key(*b.top().match));
          }
          stats.tool_calls += pool.branches.size();
          stack = prune(pool, scores);
          stack.set_branch_id(0);
          last_issued = stack.top().match;
          note_error(*stack.top().evidence);
        } else {
          Evidence evidence = executor.execute(*call);
          ++stats.tool_calls;
          explored.insert(call_key(*call));
          last_issued = call;
          note_error(evidence);
          stack.push(make_frame(index, text, call, std::move(evidence), std::move(alternatives)));
        }
      } else {
        stack.push(make_frame(index, text, std::nullopt, std::nullopt));
        if (++consecutive_pure >= 2) {
          // Impasse: resume from the most recent frame that still has an untried alternative.
          consecutive_pure = 0;
          std::optional<ToolCall> resume;
          std::size_t from = 0;
          const ReasoningStack before_search = stack;
          while (auto frame = pop_discoverable(stack)) {
            for (const auto& alt : frame->discover_state) {
              if (!explored.count(call_key(alt))) {
                resume = alt;
                break;
              }
            }
            from = frame->index;
            if (resume) break;
            stack = stack.prefix(frame->index);
          }
          if (!resume) {
            stack = before_search;
            report.note = "state search found no unexplored alternative";
            stopped = true;
          } else {
            std::vector<ToolCall> rest;
            for (const auto& alt : stack.top().discover_state) {
              if (!(alt == *resume) && !explored.count(call_key(alt))) rest.push_back(alt);
            }
            Evidence evidence = executor.execute(*resume);
            ++stats.tool_calls;
            explored.insert(call_key(*resume));
            last_issued = resume;
            note_error(evidence);
            const std::string decision = "[state search] resuming from frame " + std::to_string(from) + "\n" +
                                         render_tool_call(*resume);
            stack.push(make_frame(stack.size(), decision, resume, std::move(evidence), std::move(rest)));
          }
        }
      }
      if (!stopped && consecutive_errors >= config.retry_limit) {
        report.outcome = Outcome::error_aborted;
        report.note = std::to_string(consecutive_errors) + " consecutive error results";
        stopped = true;
      }
    }

    report.totals.prompt_tokens += stats.prompt_tokens;
    report.totals.completion_tokens += stats.completion_tokens;
    report.totals.tool_calls += stats.tool_calls;
    report.totals.tool_scans += stats.tool_scans;
    if (config.accounting) report.per_round.push_back(stats);
  }

  report.stack = std::move(stack);
  report.totals.wall_time = since(start);
  return report;
}

RunReport run_plan_replan_baseline(const std::string& image_ref, const std::string& query, const ToolRouter& router,
                                   const Backends& backends, RunConfig config) {
  config.context_policy = ContextPolicy::plan_replan;
  config.tool_scope = ToolScope::full;
  config.max_width = 1;
  return run(image_ref, query, router, backends, config);
}

json ComparisonTable::to_json() const {
  json rows_json = json::array();
  for (const auto& row : rows) {
    rows_json.push_back({{"round", row.round}, {"prompt_tokens_a", row.prompt_tokens_a},
                         {"prompt_tokens_b", row.prompt_tokens_b}});
  }
  return {{"rows", std::move(rows_json)},
          {"prompt_tokens_a", prompt_tokens_a},
          {"prompt_tokens_b", prompt_tokens_b},
          {"tool_calls_a", tool_calls_a},
          {"tool_calls_b", tool_calls_b},
          {"tool_scans_a", tool_scans_a},
          {"tool_scans_b", tool_scans_b},
          {"history_tokens_a", history_tokens_a},
          {"history_tokens_b", history_tokens_b},
          {"latency_us_a", latency_a.count()},
          {"latency_us_b", latency_b.count()},
          {"token_reduction", token_reduction},
          {"history_reduction", history_reduction},
          {"latency_reduction", latency_reduction}};
}

ComparisonTable account(const RunReport& a, const RunReport& b) {
  if (a.scenario != b.scenario || a.rounds != b.rounds || a.per_round.size() != b.per_round.size()) {
    throw Error(ErrorCode::ScenarioMismatch, "reports come from different scenarios (" + a.scenario + "/" +
                                                 std::to_string(a.rounds) + " rounds vs " + b.scenario + "/" +
                                                 std::to_string(b.rounds) + " rounds)");
  }
  ComparisonTable table;
  for (std::size_t i = 0; i < a.per_round.size(); ++i) {
    const auto& ra = a.per_round[i];
    const auto& rb = b.per_round[i];
    table.rows.push_back({ra.round, ra.prompt_tokens, rb.prompt_tokens});
    table.prompt_tokens_a += ra.prompt_tokens;
    table.prompt_tokens_b += rb.prompt_tokens;
    table.tool_calls_a += ra.tool_calls;
    table.tool_calls_b += rb.tool_calls;
    table.tool_scans_a += ra.tool_scans;
    table.tool_scans_b += rb.tool_scans;
    table.history_tokens_a += ra.prompt_tokens - ra.system_tokens;
    table.history_tokens_b += rb.prompt_tokens - rb.system_tokens;
    table.latency_a += ra.latency;
    table.latency_b += rb.latency;
  }
  auto reduction = [](double x, double y) { return y == 0.0 ? 0.0 : 1.0 - x / y; };
  table.token_reduction = reduction(static_cast<double>(table.prompt_tokens_a), static_cast<double>(table.prompt_tokens_b));
  table.history_reduction =
      reduction(static_cast<double>(table.history_tokens_a), static_cast<double>(table.history_tokens_b));
  table.latency_reduction =
      reduction(static_cast<double>(table.latency_a.count()), static_cast<double>(table.latency_b.count()));
  return table;
}

}  // namespace vicot
