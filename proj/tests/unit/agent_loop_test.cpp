#include <doctest.h>

#include <fstream>

#include "testkit.hpp"
#include "vicot/agent_loop.hpp"

using namespace vicot;

namespace {

constexpr const char* kSoap = "<think>enough</think><S>s</S><O>o</O><A>a</A><P>p</P>";

struct Harness {
  std::shared_ptr<InProcessServer> server = std::make_shared<InProcessServer>("srv");
  std::shared_ptr<ScriptedBackend> think = std::make_shared<ScriptedBackend>("think");
  std::shared_ptr<ScriptedBackend> vision = std::make_shared<ScriptedBackend>("vision");
  RunConfig config;

  Harness() {
    vision->add(Channel::rough, "A harbor scene.");
    config.require_image = false;
  }

  void tool(const std::string& name, const std::string& description, bool fails = false) {
    ToolDescriptor d;
    d.server_name = "srv";
    d.tool_name = name;
    d.description = description;
    server->add_tool(d, [name, fails](const json& args) {
      if (fails) return ToolResult::error("Error: " + name + " cannot read " + args.value("image_path", "?"));
      ToolResult r;
      r.content.push_back({ContentItem::Kind::text, name + " ok " + args.dump()});
      return r;
    });
  }

  RunReport go(const std::string& query = "Inspect the harbor.") {
    ToolRouter router;
    router.add(server);
    return run("scene.png", query, router, Backends{think, vision}, config);
  }
};

std::string turn(const std::string& reasoning, const std::string& tool, json args = json::object()) {
  return "<think>" + reasoning + "</think>\n" + render_tool_call(ToolCall{"srv", tool, std::move(args), {}});
}

}  // namespace

TEST_SUITE("agent-loop") {
  TEST_CASE("scripted walkthrough completes with a SOAP report") {
    const RunReport report = testkit::walkthrough_report();
    REQUIRE(report.outcome == Outcome::completed);
    REQUIRE(report.final.has_value());
    CHECK(report.final->kind == StructuredKind::soap);
    CHECK(report.rounds == 4);
    CHECK(report.totals.tool_calls == 3);
    CHECK(report.stack.size() == 4);
    const std::vector<std::string> tools = {"image_detection", "image_binary", "image_crop"};
    for (std::size_t i = 0; i < tools.size(); ++i) {
      REQUIRE(report.stack[i].match.has_value());
      CHECK(report.stack[i].match->tool_name == tools[i]);
      REQUIRE(report.stack[i].evidence.has_value());
      CHECK_FALSE(report.stack[i].evidence->is_error);
    }
    CHECK(report.stack[0].evidence->text.find("warship tail number") != std::string::npos);
  }

  TEST_CASE("immediate report") {
    Harness h;
    h.tool("image_crop", "Crop a region.");
    h.think->add(Channel::think, kSoap);
    const RunReport report = h.go();
    CHECK(report.outcome == Outcome::completed);
    CHECK(report.rounds == 1);
    CHECK(report.totals.tool_calls == 0);
    CHECK(report.final->kind == StructuredKind::soap);
  }

  TEST_CASE("malformed blocks are fed back until the retry limit") {
    Harness h;
    h.tool("image_crop", "Crop a region.");
    for (int i = 0; i < 5; ++i) {
      h.think->add(Channel::think, "<think>try</think><use_mcp_tool><server_name>srv</server_name>");
    }
    const RunReport report = h.go();
    CHECK(report.outcome == Outcome::error_aborted);
    CHECK(report.rounds == h.config.retry_limit);
    for (const auto& f : report.stack.frames()) {
      REQUIRE(f.evidence.has_value());
      CHECK(f.evidence->is_error);
      CHECK(f.evidence->source == EvidenceSource::host_feedback);
      CHECK(f.evidence->text.rfind(std::string(kErrorMarker), 0) == 0);
    }
    CHECK_FALSE(report.final.has_value());
  }

  TEST_CASE("tool errors are fed back verbatim and the model can recover") {
    Harness h;
    h.tool("image_crop", "Crop a region.", true);
    h.tool("image_binary", "Binarize a region.");
    h.think->add(Channel::think, turn("crop it", "image_crop", {{"image_path", "missing.png"}}));
    h.think->add(Channel::think, turn("binarize instead", "image_binary", {{"image_path", "scene.png"}}));
    h.think->add(Channel::think, "<think>done</think>The deck number is 41.<end>");
    const RunReport report = h.go();
    REQUIRE(report.outcome == Outcome::completed);
    CHECK(report.final->kind == StructuredKind::end_token);
    CHECK(report.stack[0].evidence->text == std::string(kErrorMarker) + "Error: image_crop cannot read missing.png");
    CHECK_FALSE(report.stack[1].evidence->is_error);
  }

  TEST_CASE("feedback_error") {
    ToolResult bad = ToolResult::error("Error: [Errno 2] No such file or directory: 'x.png'");
    CHECK(feedback_error(bad).text.find("No such file or directory") != std::string::npos);
    ToolResult assertion = ToolResult::error("error: (-215:Assertion failed) !_img.empty() in function 'imwrite'");
    CHECK(feedback_error(assertion).text.find("Assertion failed") != std::string::npos);
    ToolResult fine;
    fine.content.push_back({ContentItem::Kind::text, "ok"});
    CHECK_THROWS_AS(feedback_error(fine), Error);
  }

  TEST_CASE("identical consecutive calls are not re-issued") {
    Harness h;
    h.tool("image_crop", "Crop a region.");
    const std::string crop = turn("crop", "image_crop", {{"x1", 1}});
    h.think->add(Channel::think, crop);
    h.think->add(Channel::think, crop);
    h.think->add(Channel::think, kSoap);
    const RunReport report = h.go();
    REQUIRE(report.outcome == Outcome::completed);
    CHECK(report.totals.tool_calls == 1);
    CHECK(h.server->received().size() == 1);
    REQUIRE(report.stack[1].evidence.has_value());
    CHECK(report.stack[1].evidence->source == EvidenceSource::host_feedback);
    CHECK(report.stack[1].evidence->text.find("duplicate call") != std::string::npos);
  }

  TEST_CASE("round limit") {
    Harness h;
    h.tool("image_crop", "Crop a region.");
    h.config.max_rounds = 2;
    for (int i = 0; i < 3; ++i) h.think->add(Channel::think, turn("crop", "image_crop", {{"x1", i}}));
    const RunReport report = h.go();
    CHECK(report.outcome == Outcome::round_limit);
    CHECK(report.rounds == 2);
  }

  TEST_CASE("terminal mode filters accepted forms") {
    Harness h;
    h.tool("image_crop", "Crop a region.");
    h.config.terminal_mode = TerminalMode::soap;
    h.think->add(Channel::think, "<think>x</think>answer<end>");
    h.think->add(Channel::think, kSoap);
    const RunReport report = h.go();
    CHECK(report.outcome == Outcome::completed);
    CHECK(report.rounds == 2);
    CHECK(report.final->kind == StructuredKind::soap);
  }

  TEST_CASE("equally plausible tools branch and the better branch is kept") {
    Harness h;
    h.tool("harbor_scan", "Scan the harbor region for vessels.", true);
    h.tool("harbor_sweep", "Sweep the harbor region for vessels.");
    h.config.max_width = 3;
    h.think->add(Channel::think, turn("scan or sweep the harbor region for vessels", "harbor_scan"));
    h.think->add(Channel::think, kSoap);
    const RunReport report = h.go();
    REQUIRE(report.outcome == Outcome::completed);
    CHECK(report.per_round[0].tool_calls == 2);
    CHECK(report.stack[0].match->tool_name == "harbor_sweep");
    CHECK_FALSE(report.stack[0].evidence->is_error);
    CHECK(h.server->received().size() == 2);
  }

  TEST_CASE("state search resumes from an untried alternative after an impasse") {
    Harness h;
    h.tool("harbor_scan", "Scan the harbor region for vessels.");
    h.tool("harbor_sweep", "Sweep the harbor region for vessels.");
    h.think->add(Channel::think, turn("scan or sweep the harbor region for vessels", "harbor_scan"));
    h.think->add(Channel::think, "<think>hmm</think>Not sure yet.");
    h.think->add(Channel::think, "<think>still unsure</think>Thinking.");
    h.think->add(Channel::think, kSoap);
    const RunReport report = h.go();
    REQUIRE(report.outcome == Outcome::completed);
    REQUIRE(report.stack.size() == 3);
    CHECK(report.stack[1].decision.rfind("[state search] resuming from frame 0", 0) == 0);
    CHECK(report.stack[1].match->tool_name == "harbor_sweep");
    CHECK(report.totals.tool_calls == 2);
  }

  TEST_CASE("an impasse with nothing left to explore stops the run") {
    Harness h;
    h.tool("image_crop", "Crop a region.");
    h.think->add(Channel::think, "<think>a</think>Nothing.");
    h.think->add(Channel::think, "<think>b</think>Still nothing.");
    h.think->add(Channel::think, kSoap);
    const RunReport report = h.go();
    CHECK(report.outcome == Outcome::round_limit);
    CHECK(report.rounds == 2);
    CHECK(report.note.find("state search") != std::string::npos);
  }

  TEST_CASE("frames carry evidence whenever they carry a call") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const RunReport report = testkit::random_scenario(seed).run();
      for (const auto& f : report.stack.frames()) {
        if (f.match) CHECK(f.evidence.has_value());
      }
      for (std::size_t i = 1; i < report.stack.size(); ++i) {
        const auto& a = report.stack[i - 1];
        const auto& b = report.stack[i];
        if (a.match && b.match && *a.match == *b.match) {
          CHECK(b.evidence->source == EvidenceSource::host_feedback);
        }
      }
    }
  }

  TEST_CASE("runs are deterministic") {
    for (std::uint64_t seed = 100; seed < 110; ++seed) {
      const auto scenario = testkit::random_scenario(seed);
      json a, b;
      to_json(a, scenario.run().stack);
      to_json(b, scenario.run().stack);
      CHECK(a.dump() == b.dump());
    }
  }

  TEST_CASE("windowed context stays flat while the baseline grows") {
    cli::BenchArgs args;
    args.latency_per_token = std::chrono::nanoseconds(0);
    const cli::BenchOutcome bench = cli::run_bench(args);
    const auto& a = bench.stack.per_round;
    const auto& b = bench.baseline.per_round;
    REQUIRE(a.size() == 10);
    REQUIRE(b.size() == 10);
    for (std::size_t t = args.k + 1; t < a.size(); ++t) CHECK(a[t].prompt_tokens == a[args.k].prompt_tokens);
    for (std::size_t t = 1; t < b.size(); ++t) {
      CHECK(b[t].prompt_tokens > b[t - 1].prompt_tokens);
      CHECK(b[t].prompt_tokens >= a[t].prompt_tokens);
    }
    for (const auto& r : b) CHECK(r.tool_scans == args.tools);
    CHECK(bench.baseline.system_text.find("tool_09") != std::string::npos);
  }

  TEST_CASE("account") {
    cli::BenchArgs args;
    args.latency_per_token = std::chrono::nanoseconds(0);
    const cli::BenchOutcome bench = cli::run_bench(args);
    const ComparisonTable same = account(bench.stack, bench.stack);
    CHECK(same.token_reduction == 0.0);
    CHECK(same.history_reduction == 0.0);
    CHECK(bench.table.token_reduction > 0.0);

    Harness h;
    h.tool("image_crop", "Crop a region.");
    h.think->add(Channel::think, kSoap);
    const RunReport other = h.go();
    try {
      account(bench.stack, other);
      FAIL("different scenarios compared");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ScenarioMismatch);
    }
  }

  TEST_CASE("one-round scenario costs the same apart from the tool listing") {
    cli::BenchArgs args;
    args.rounds = 1;
    args.latency_per_token = std::chrono::nanoseconds(0);
    const cli::BenchOutcome bench = cli::run_bench(args);
    CHECK(bench.table.history_reduction == 0.0);
    CHECK(bench.table.history_tokens_a == bench.table.history_tokens_b);
    CHECK(bench.table.tool_scans_a < bench.table.tool_scans_b);
  }

  TEST_CASE("coarse-to-fine tool listing") {
    const auto tools = cli::bench_tools(10);
    const std::string listing = render_tool_scope(ToolScope::coarse_to_fine, "now run tool_04 op04", tools, 0.1);
    CHECK(listing.find("<tool_name>tool_04</tool_name>") != std::string::npos);
    CHECK(listing.find("<tool_name>tool_05</tool_name>") == std::string::npos);
    CHECK(listing.find("Other tools: tool_00 tool_01 tool_02 tool_03 tool_05") != std::string::npos);
    CHECK(render_tool_scope(ToolScope::full, "anything", tools, 0.1) == generate_tool_xml(tools));
  }

  TEST_CASE("branch scorers") {
    auto judge = std::make_shared<ScriptedBackend>("judge");
    judge->add(Channel::think, "I would rate this 0.7 overall.");
    judge->add(Channel::think, "no idea");
    judge->add(Channel::think, "5");
    const BranchScorer scorer = make_judge_scorer(judge);
    ReasoningStack s(Origin{"q", "i.png", "c"});
    CHECK(scorer(s) == doctest::Approx(0.7));
    CHECK(scorer(s) == 0.0);
    CHECK(scorer(s) == 1.0);

    ToolDescriptor crop;
    crop.server_name = "srv";
    crop.tool_name = "image_crop";
    crop.input_schema = {{"type", "object"}, {"required", {"x1"}}};
    ReasoningFrame f;
    f.match = ToolCall{"srv", "image_crop", {{"x1", 3}}, {}};
    f.evidence = Evidence{"ok", {}, false, EvidenceSource::tool, "{}"};
    s.push(f);
    CHECK(heuristic_branch_score(s, std::vector<ToolDescriptor>{crop}) == 3.0);
    f.index = 1;
    f.evidence->is_error = true;
    s.push(f);
    CHECK(heuristic_branch_score(s, std::vector<ToolDescriptor>{crop}) == 1.0);
  }

  TEST_CASE("config validation") {
    RunConfig config;
    config.k = 0;
    CHECK_THROWS_AS(config.validate(), Error);
    config.k = 1;
    config.retry_limit = 0;
    CHECK_THROWS_AS(config.validate(), Error);
    config.retry_limit = 1;
    CHECK_NOTHROW(config.validate());
  }
}
