// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <fstream>
#include <ostream>

#include "vicot/cli.hpp"

namespace vicot::cli {
namespace {

std::string two_digits(std::size_t i) {
  return (i < 10 ? "0" : "") + std::to_string(i);
}

std::string fit(std::string text, std::size_t bytes, const std::string& filler) {
  while (text.size() + filler.size() <= bytes) text += filler;
  text.resize(bytes, ' ');
  return text;
}

/// Think turn of round `round` calling tool `index`, exactly kBenchDecisionBytes long.
std::string bench_decision(std::size_t round, std::size_t index) {
  const ToolCall call{std::string(kBenchServer), "tool_" + two_digits(index), json{{"round", round}}, {}};
  const std::string open = "<think>";
  const std::string close = "</think>\n" + render_tool_call(call);
  if (open.size() + close.size() + 4 > kBenchDecisionBytes) {
    throw Error(ErrorCode::Precondition, "bench decision does not fit");
  }
  const std::size_t room = kBenchDecisionBytes - open.size() - close.size();
  return open + fit("", room, "op" + two_digits(index) + " ") + close;
}

std::string bench_answer() {
  return "<think>All steps done.</think>\n<S>Synthetic bench.</S>\n<O>Every tool answered.</O>\n"
         "<A>Nothing to assess.</A>\n<P>No follow-up.</P>";
}

fs::path bench_image() {
  const fs::path path = fs::temp_directory_path() / "vicot_bench_scene.png";
  if (!fs::exists(path)) {
    std::ofstream out(path, std::ios::binary);
    out << "\x89PNG\r\n\x1a\n";
  }
  return path;
}

struct Scenario {
  std::size_t rounds;
  std::size_t tools;
  std::size_t k;
};

Scenario load_scenario(const BenchArgs& args) {
  Scenario s{args.rounds, args.tools, args.k};
  if (args.scenario != "synthetic") {
    std::ifstream in(args.scenario);
    if (!in) throw Error(ErrorCode::Io, "cannot read scenario '" + args.scenario + "'");
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::Config, "scenario '" + args.scenario + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::Config, "scenario must be a JSON object");
    s.rounds = j.value("rounds", s.rounds);
    s.tools = j.value("tools", s.tools);
    s.k = j.value("k", s.k);
  }
  if (s.rounds < 1 || s.rounds > 99) throw Error(ErrorCode::Precondition, "rounds must be within 1..99");
  if (s.tools < 1 || s.tools > 100) throw Error(ErrorCode::Precondition, "tools must be within 1..100");
  if (s.k < 1) throw Error(ErrorCode::Precondition, "k must be at least 1");
  return s;
}

RunReport run_scenario(const Scenario& s, const BenchArgs& args, bool baseline) {
  auto server = std::make_shared<InProcessServer>(std::string(kBenchServer));
  for (auto& tool : bench_tools(s.tools)) {
    const std::string name = tool.tool_name;
    server->add_tool(std::move(tool), [name](const json& arguments) {
      ToolResult result;
      const std::string head = name + " finished round " + std::to_string(arguments.value("round", 0)) + ".";
      result.content.push_back({ContentItem::Kind::text, fit(head, kBenchEvidenceBytes, " ok")});
      return result;
    });
  }
  ToolRouter router;
  router.add(server);

  auto think_backend = std::make_shared<ScriptedBackend>("bench-think");
  think_backend->set_latency_per_token(args.latency_per_token);
  for (std::size_t t = 1; t < s.rounds; ++t) think_backend->add(Channel::think, bench_decision(t, (t - 1) % s.tools));
  think_backend->add(Channel::think, bench_answer());
  auto vision_backend = std::make_shared<ScriptedBackend>("bench-vision");
  vision_backend->add(Channel::rough, std::string(kBenchCaption));

  RunConfig config;
  config.k = s.k;
  config.max_rounds = s.rounds;
  config.tool_scope = ToolScope::coarse_to_fine;
  config.templates.system = config.templates.bench_system;
  const Backends backends{think_backend, vision_backend};
  const std::string image = bench_image().string();
  return baseline ? run_plan_replan_baseline(image, std::string(kBenchQuery), router, backends, config)
                  : run(image, std::string(kBenchQuery), router, backends, config);
}

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", fraction * 100.0);
  return buf;
}

}  // namespace

std::vector<ToolDescriptor> bench_tools(std::size_t count) {
  std::vector<ToolDescriptor> tools;
  for (std::size_t i = 0; i < count; ++i) {
    ToolDescriptor d;
    d.server_name = std::string(kBenchServer);
    d.tool_name = "tool_" + two_digits(i);
    d.description = "Synthetic bench operation op" + two_digits(i) + ".";
    d.input_schema = {{"type", "object"},
                      {"properties", {{"round", {{"type", "integer"}, {"description", "Round number."}}}}},
                      {"required", {"round"}}};
    tools.push_back(std::move(d));
  }
  return tools;
}

BenchOutcome run_bench(const BenchArgs& args) {
  const Scenario s = load_scenario(args);
  BenchOutcome outcome;
  outcome.stack = run_scenario(s, args, false);
  outcome.baseline = run_scenario(s, args, true);
  outcome.table = account(outcome.stack, outcome.baseline);
  return outcome;
}

int cmd_bench(const BenchArgs& args, std::ostream& out, std::ostream& err) {
  BenchOutcome outcome;
  try {
    outcome = run_bench(args);
  } catch (const Error& e) {
    err << "bench: " << e.what() << "\n";
    return kExitFailure;
  }
  const ComparisonTable& t = outcome.table;
  if (args.json) {
    json j = t.to_json();
    j["rounds"] = outcome.stack.rounds;
    j["frame_tokens"] = kBenchFrameTokens;
    out << j.dump(2) << "\n";
    return kExitOk;
  }
  char line[128];
  out << "round  stack_tokens  baseline_tokens\n";
  for (const auto& row : t.rows) {
    std::snprintf(line, sizeof line, "%5zu  %12zu  %15zu\n", row.round, row.prompt_tokens_a, row.prompt_tokens_b);
    out << line;
  }
  std::snprintf(line, sizeof line, "total  %12zu  %15zu\n", t.prompt_tokens_a, t.prompt_tokens_b);
  out << line;
  out << "tool scans: " << t.tool_scans_a << " vs " << t.tool_scans_b << "\n";
  out << "token reduction: " << percent(t.token_reduction) << "\n";
  out << "history reduction (system turn excluded): " << percent(t.history_reduction) << "\n";
  out << "latency reduction: " << percent(t.latency_reduction) << "\n";
  return kExitOk;
}

}  // namespace vicot::cli
