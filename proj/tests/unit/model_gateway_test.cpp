#include <doctest.h>

#include <fstream>
#include <random>
#include <thread>

#include <httplib.h>

#include "testkit.hpp"
#include "vicot/model_gateway.hpp"

using namespace vicot;

namespace {

json walkthrough_script() {
  std::ifstream in(testkit::fixture("walkthrough/script.json"));
  return json::parse(in);
}

ReasoningFrame frame(std::size_t index, bool with_call, std::size_t decision_bytes = 40, std::size_t evidence_bytes = 40) {
  ReasoningFrame f;
  f.index = index;
  f.decision = std::string(decision_bytes, 'd');
  if (with_call) {
    f.match = ToolCall{"mcp_vision_server", "image_crop", json::object(), {}};
    Evidence e;
    e.text = std::string(evidence_bytes, 'e');
    f.evidence = e;
  }
  f.token_count = ReasoningFrame::count_tokens(f.decision, f.evidence);
  return f;
}

/// Chat endpoint on a free local port, answering with `status` and `body`.
class LocalEndpoint {
 public:
  LocalEndpoint(int status, std::string body) {
    server_.Post("/v1/chat/completions", [this, status, body](const httplib::Request& req, httplib::Response& res) {
      {
        std::lock_guard lock(mutex_);
        last_request_ = req.body;
        authorization_ = req.get_header_value("Authorization");
      }
      res.status = status;
      res.set_content(body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalEndpoint() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
  json last_request() const {
    std::lock_guard lock(mutex_);
    return json::parse(last_request_);
  }
  std::string authorization() const {
    std::lock_guard lock(mutex_);
    return authorization_;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mutex_;
  std::string last_request_;
  std::string authorization_;
};

}  // namespace

TEST_SUITE("model-gateway") {
  TEST_CASE("estimate_tokens") {
    CHECK(estimate_tokens("") == 0);
    CHECK(estimate_tokens(std::string(400, 'x')) == 100);
    CHECK(estimate_tokens("abc") == 1);
    std::mt19937_64 rng(31);
    for (int i = 0; i < 200; ++i) {
      const std::string a(std::uniform_int_distribution<std::size_t>(0, 300)(rng), 'a');
      const std::string b(std::uniform_int_distribution<std::size_t>(0, 300)(rng), 'b');
      CHECK(estimate_tokens(a + b) >= std::max(estimate_tokens(a), estimate_tokens(b)));
    }
  }

  TEST_CASE("scripted think reproduces the walkthrough turn") {
    const json script = walkthrough_script();
    auto backend = ScriptedBackend::from_json(script);
    PromptBundle bundle;
    bundle.turns.push_back({Role::system, "system"});
    const ModelTurn turn = think(*backend, bundle);
    CHECK(turn.text == script["think"][0].get<std::string>());
    CHECK(turn.text.find("image_detection") != std::string::npos);
    CHECK(turn.completion_tokens == estimate_tokens(turn.text));
    CHECK(turn.prompt_tokens == bundle.estimated_tokens());
  }

  TEST_CASE("scripted backend runs out loudly") {
    ScriptedBackend backend;
    backend.add(Channel::think, "only one");
    PromptBundle bundle;
    bundle.turns.push_back({Role::system, "s"});
    CHECK(think(backend, bundle).text == "only one");
    try {
      think(backend, bundle);
      FAIL("exhausted backend answered");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BackendExhausted);
    }
    CHECK(backend.consumed(Channel::think) == 1);
    CHECK(backend.remaining(Channel::think) == 0);
  }

  TEST_CASE("prompt hash guard catches drift") {
    PromptBundle expected;
    expected.turns.push_back({Role::system, "expected"});
    PromptBundle drifted;
    drifted.turns.push_back({Role::system, "drifted"});
    ScriptedBackend backend;
    backend.add(Channel::think, "ok", expected.hash());
    backend.add(Channel::think, "ok again", expected.hash());
    CHECK(think(backend, expected).text == "ok");
    try {
      think(backend, drifted);
      FAIL("drift not caught");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::PromptDrift);
    }

    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(expected.hash()));
    auto from_json = ScriptedBackend::from_json(json{{"think", {{{"text", "hashed"}, {"prompt_hash", hex}}}}});
    CHECK(think(*from_json, expected).text == "hashed");
  }

  TEST_CASE("property: scripted transcripts are deterministic") {
    std::mt19937_64 rng(32);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<std::string> answers;
      for (int i = 0; i < 6; ++i) answers.push_back(testkit::random_identifier(rng, 40));
      auto transcript = [&] {
        ScriptedBackend backend;
        for (const auto& a : answers) backend.add(Channel::think, a);
        std::uint64_t h = 1469598103934665603ULL;
        PromptBundle bundle;
        bundle.turns.push_back({Role::system, "s"});
        for (std::size_t i = 0; i < answers.size(); ++i) {
          const ModelTurn turn = think(backend, bundle);
          bundle.turns.push_back({Role::assistant, turn.text});
          h = (h ^ bundle.hash()) * 1099511628211ULL;
        }
        return h;
      };
      CHECK(transcript() == transcript());
    }
  }

  TEST_CASE("describe") {
    const json script = walkthrough_script();
    auto backend = ScriptedBackend::from_json(script);
    const std::string image = testkit::fixture("walkthrough/test.png").string();
    const ModelTurn rough = describe(*backend, image, DescribeMode::rough, "Identify the ship.");
    CHECK(rough.text.find("coastal port area") != std::string::npos);

    ScriptedBackend detailed;
    detailed.add(Channel::detailed, "The crop shows the white digits \"41\" on a dark deck.");
    CHECK(describe(detailed, image, DescribeMode::detailed, "binarized crop").text.find("\"41\"") != std::string::npos);

    try {
      describe(*backend, "missing.png", DescribeMode::rough, "");
      FAIL("missing image accepted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Precondition);
    }
  }

  TEST_CASE("http chat adapter") {
    LocalEndpoint ok(200, R"({"choices":[{"message":{"content":"<think>x</think>answer<end>"}}],)"
                          R"("usage":{"prompt_tokens":321,"completion_tokens":9}})");
    ::setenv("VICOT_TEST_TOKEN", "secret", 1);
    HttpChatBackend backend(HttpChatConfig{ok.url(), "test-model", "VICOT_TEST_TOKEN", 0.2, std::chrono::seconds(5)});
    PromptBundle bundle;
    bundle.turns = {{Role::system, "sys"}, {Role::user, "look"}, {Role::assistant, "call"}, {Role::tool, "result"}};
    bundle.image_refs = {testkit::fixture("walkthrough/test.png").string()};
    const ModelTurn turn = think(backend, bundle);
    CHECK(turn.text == "<think>x</think>answer<end>");
    CHECK(turn.prompt_tokens == 321);
    CHECK(turn.completion_tokens == 9);
    CHECK(ok.authorization() == "Bearer secret");
    const json sent = ok.last_request();
    CHECK(sent["model"] == "test-model");
    REQUIRE(sent["messages"].size() == 4);
    CHECK(sent["messages"][1]["content"][1]["image_url"]["url"].get<std::string>().rfind("data:image/png;base64,", 0) == 0);
    CHECK(sent["messages"][3]["role"] == "user");

    LocalEndpoint failing(500, R"({"error":"overloaded"})");
    HttpChatBackend broken(HttpChatConfig{failing.url(), "m", "", 0.0, std::chrono::seconds(5)});
    PromptBundle plain;
    plain.turns = {{Role::system, "sys"}};
    try {
      think(broken, plain);
      FAIL("500 accepted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EndpointError);
      CHECK(std::string(e.what()).find("500") != std::string::npos);
    }
    CHECK_THROWS_AS(HttpChatBackend(HttpChatConfig{"https://example.com/v1", "m", "", 0.0, std::chrono::seconds(1)}),
                    Error);
  }

  TEST_CASE("assemble_context layout") {
    const Templates& templates = Templates::defaults();
    ReasoningStack empty(Origin{"q", "img.png", "caption"});
    const PromptBundle base = assemble_context(empty, 3, templates, "<available_tools>X</available_tools>");
    REQUIRE(base.turns.size() == 2);
    CHECK(base.turns[0].role == Role::system);
    CHECK(base.system_text().find("<available_tools>X</available_tools>") != std::string::npos);
    CHECK(base.system_text().find("{available_tools}") == std::string::npos);
    CHECK(base.turns[1].role == Role::user);
    CHECK(base.image_refs == std::vector<std::string>{"img.png"});

    ReasoningStack five = empty;
    for (std::size_t i = 0; i < 5; ++i) five.push(frame(i, true));
    const PromptBundle windowed = assemble_context(five, 2, templates, "");
    REQUIRE(windowed.turns.size() == 6);
    CHECK(windowed.turns[2].role == Role::assistant);
    CHECK(windowed.turns[3].role == Role::tool);
    CHECK(assemble_full_context(five, templates, "").turns.size() == 12);

    ReasoningStack pure = empty;
    pure.push(frame(0, false));
    const PromptBundle one = assemble_context(pure, 3, templates, "");
    REQUIRE(one.turns.size() == 3);
    CHECK(one.turns[2].role == Role::assistant);
  }

  TEST_CASE("property: windowed context is bounded and roles alternate") {
    std::mt19937_64 rng(33);
    const Templates& templates = Templates::defaults();
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t k = std::uniform_int_distribution<std::size_t>(1, 5)(rng);
      ReasoningStack s(Origin{"query", "img.png", "caption"});
      std::size_t max_frame = 0;
      const auto header = assemble_context(s, k, templates, "tools").estimated_tokens();
      for (std::size_t i = 0; i < 30; ++i) {
        const bool call = std::bernoulli_distribution(0.7)(rng);
        s.push(frame(i, call, std::uniform_int_distribution<std::size_t>(1, 500)(rng),
                     std::uniform_int_distribution<std::size_t>(1, 500)(rng)));
        max_frame = std::max(max_frame, s.top().token_count + 1);
        const PromptBundle b = assemble_context(s, k, templates, "tools");
        REQUIRE(b.estimated_tokens() <= header + k * max_frame);
        REQUIRE(b.turns[0].role == Role::system);
        for (std::size_t t = 1; t < b.turns.size(); ++t) {
          REQUIRE(b.turns[t].role != Role::system);
          if (b.turns[t].role == Role::tool) REQUIRE(b.turns[t - 1].role == Role::assistant);
        }
      }
    }
  }

  TEST_CASE("templates") {
    const Templates& t = Templates::defaults();
    CHECK(t.system.find("{available_tools}") != std::string::npos);
    CHECK(t.integration.find("{regional_narrative}") != std::string::npos);
    CHECK(t.integration.find("{user_query}") != std::string::npos);
    CHECK(fill("a {x} b {y}", {{"x", "1"}}) == "a 1 b {y}");
    CHECK(fill("{x}{x}", {{"x", "ab"}}) == "abab");
    CHECK(fill("unclosed {x", {{"x", "1"}}) == "unclosed {x");
  }
}
