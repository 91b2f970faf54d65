#include <doctest.h>

#include <thread>

#include "testkit.hpp"
#include "vicot/in_process.hpp"
#include "vicot/transport.hpp"

using namespace vicot;
using namespace std::chrono_literals;

namespace {

ErrorCode spawn_error(LaunchSpec spec, TransportOptions options = {}) {
  try {
    spawn(std::move(spec), options);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("spawn succeeded");
  return ErrorCode::Precondition;
}

ToolCall echo(const std::string& text, const std::string& server = "double") {
  return ToolCall{server, "echo", json{{"text", text}}, {}};
}

std::vector<std::string> names(const std::vector<ToolDescriptor>& tools) {
  std::vector<std::string> out;
  for (const auto& t : tools) out.push_back(t.tool_name);
  return out;
}

}  // namespace

TEST_SUITE("mcp-transport") {
  TEST_CASE("spawn failures") {
    CHECK(spawn_error(LaunchSpec{"x", "/nonexistent/tool-server", {}, {}, {}}) == ErrorCode::SpawnFailed);
    CHECK(spawn_error(testkit::double_spec("exit")) == ErrorCode::SpawnFailed);
    const auto start = std::chrono::steady_clock::now();
    CHECK(spawn_error(testkit::double_spec("silent"), TransportOptions{300ms, 1s}) == ErrorCode::HandshakeTimeout);
    CHECK(std::chrono::steady_clock::now() - start < 5s);
  }

  TEST_CASE("handshake outcomes") {
    auto zero = spawn(testkit::double_spec("zero"));
    CHECK(zero->state() == ServerState::ready);
    CHECK(zero->discovered_tools().empty());
    CHECK(zero->list_tools().empty());

    auto bad = spawn(testkit::double_spec("badversion"));
    CHECK(bad->state() == ServerState::failed);
  }

  TEST_CASE("discovery and calls") {
    auto server = spawn(testkit::double_spec("normal"));
    REQUIRE(server->state() == ServerState::ready);
    CHECK(names(server->discovered_tools()) == std::vector<std::string>{"echo", "fail", "sleep", "die"});
    for (const auto& t : server->list_tools()) CHECK(t.server_name == "double");

    const ToolResult ok = server->call_tool(echo("hello"));
    CHECK_FALSE(ok.is_error);
    CHECK(json::parse(ok.text()) == json{{"text", "hello"}});
    CHECK(ok.raw.contains("content"));

    const ToolResult failed = server->call_tool(ToolCall{"double", "fail", json::object(), {}});
    CHECK(failed.is_error);
    CHECK(failed.text().find("No such file") != std::string::npos);

    try {
      server->call_tool(echo("x", "elsewhere"));
      FAIL("wrong server accepted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::WrongServer);
    }
    try {
      server->call_tool(ToolCall{"double", "sleep", json{{"ms", 2000}}, {}}, 100ms);
      FAIL("no timeout");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Timeout);
    }
    CHECK(server->stderr_log().find("double starting in mode normal") != std::string::npos);

    server->close();
    CHECK(server->state() == ServerState::closed);
    try {
      server->list_tools();
      FAIL("closed handle answered");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::TransportClosed);
    }
  }

  TEST_CASE("a crash mid-call fails in-flight calls and the handle") {
    auto server = spawn(testkit::double_spec("normal"));
    try {
      server->call_tool(ToolCall{"double", "die", json::object(), {}}, 5s);
      FAIL("call on a dying server returned");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::TransportClosed);
    }
    CHECK(server->state() == ServerState::failed);
    CHECK_THROWS_AS(server->call_tool(echo("after")), Error);

    ToolRouter router;
    router.add(server);
    const ToolResult routed = router.call(echo("after"), 1s);
    CHECK(routed.is_error);
  }

  TEST_CASE("tool list changes show up on the next listing") {
    auto server = spawn(testkit::double_spec("growing"));
    ToolRouter router;
    router.add(server);
    const auto first = router.all_tools().size();
    const auto second = router.all_tools().size();
    CHECK(second == first + 1);
    CHECK(server->discovered_tools().size() == second);
  }

  TEST_CASE("property: responses pair with requests under reordering") {
    auto server = spawn(testkit::double_spec("chaos"), TransportOptions{10s, 10s});
    std::vector<std::thread> workers;
    std::atomic<int> mismatches{0};
    for (int w = 0; w < 8; ++w) {
      workers.emplace_back([&, w] {
        for (int i = 0; i < 10; ++i) {
          const std::string text = "worker " + std::to_string(w) + " call " + std::to_string(i);
          try {
            const ToolResult r = server->call_tool(echo(text));
            if (json::parse(r.text()) != json{{"text", text}}) ++mismatches;
          } catch (const std::exception&) {
            ++mismatches;
          }
        }
      });
    }
    for (auto& t : workers) t.join();
    CHECK(mismatches.load() == 0);
    CHECK(server->orphan_responses() >= 40);
    CHECK(server->state() == ServerState::ready);
  }

  TEST_CASE("conformance session framing is stable across runs") {
    auto session = [] {
      auto server = spawn(testkit::double_spec("normal"));
      server->list_tools();
      for (int i = 0; i < 10; ++i) {
        if (i % 2) {
          server->call_tool(ToolCall{"double", "fail", json::object(), {}});
        } else {
          server->call_tool(echo("call " + std::to_string(i)));
        }
      }
      server->close();
      return server->transcript();
    };
    const auto first = session();
    CHECK(first.size() == 24);
    CHECK(first.front() == R"(> {"id":0,"kind":"hello","payload":{"protocol_version":1}})");
    CHECK(session() == first);
  }

  TEST_CASE("call_batch keeps input order") {
    auto slow = [](const std::string& name, std::vector<std::pair<int, std::chrono::steady_clock::time_point>>* log,
                   std::mutex* m) {
      auto server = std::make_shared<InProcessServer>(name);
      ToolDescriptor d;
      d.server_name = name;
      d.tool_name = "work";
      server->add_tool(d, [log, m](const json& args) {
        const auto start = std::chrono::steady_clock::now();
        std::this_thread::sleep_for(std::chrono::milliseconds(args.value("ms", 0)));
        std::lock_guard lock(*m);
        log->push_back({args.value("n", 0), start});
        ToolResult r;
        r.content.push_back({ContentItem::Kind::text, "done " + std::to_string(args.value("n", 0))});
        return r;
      });
      return server;
    };
    std::vector<std::pair<int, std::chrono::steady_clock::time_point>> log;
    std::mutex m;
    ToolRouter router;
    router.add(slow("a", &log, &m));
    router.add(slow("b", &log, &m));

    const std::vector<ToolCall> two = {{"a", "work", {{"n", 1}, {"ms", 300}}, {}},
                                       {"b", "work", {{"n", 2}, {"ms", 300}}, {}}};
    const auto start = std::chrono::steady_clock::now();
    const auto results = call_batch(router, two);
    const auto elapsed = std::chrono::steady_clock::now() - start;
    REQUIRE(results.size() == 2);
    CHECK(results[0].text() == "done 1");
    CHECK(results[1].text() == "done 2");
    CHECK(elapsed < 550ms);

    log.clear();
    const std::vector<ToolCall> same = {{"a", "work", {{"n", 1}, {"ms", 60}}, {}},
                                        {"a", "work", {{"n", 2}, {"ms", 10}}, {}},
                                        {"a", "work", {{"n", 3}, {"ms", 30}}, {}}};
    const auto serial = call_batch(router, same);
    REQUIRE(serial.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(serial[i].text() == "done " + std::to_string(i + 1));
    REQUIRE(log.size() == 3);
    CHECK(log[0].first == 1);
    CHECK(log[1].first == 2);
    CHECK(log[2].first == 3);
    CHECK(log[1].second - log[0].second >= 60ms);

    const std::vector<ToolCall> mixed = {{"a", "work", {{"n", 7}}, {}}, {"nowhere", "work", json::object(), {}},
                                         {"b", "work", {{"n", 8}}, {}}};
    const auto out = call_batch(router, mixed);
    REQUIRE(out.size() == 3);
    CHECK(out[0].text() == "done 7");
    CHECK(out[1].is_error);
    CHECK(out[1].text().find("UnknownServer") != std::string::npos);
    CHECK(out[2].text() == "done 8");
  }

  TEST_CASE("desk tool contracts") {
    auto desk = std::make_shared<InProcessServer>("mcp_vision_server");
    register_desk_tools(*desk);
    const std::string image = testkit::fixture("walkthrough/test.png").string();
    const ToolResult crop = desk->call_tool(
        ToolCall{"mcp_vision_server", "image_crop",
                 {{"image_path", image}, {"x1", 149}, {"y1", 172}, {"x2", 477}, {"y2", 796}}, {}},
        1s);
    CHECK_FALSE(crop.is_error);
    CHECK(crop.paths().size() == 1);
    CHECK_FALSE(crop.text().empty());

    const ToolResult missing = desk->call_tool(
        ToolCall{"mcp_vision_server", "image_crop",
                 {{"image_path", "missing.png"}, {"x1", 1}, {"y1", 1}, {"x2", 5}, {"y2", 5}}, {}},
        1s);
    CHECK(missing.is_error);
    CHECK(missing.text().find("No such file") != std::string::npos);

    const ToolResult detection = desk->call_tool(
        ToolCall{"mcp_vision_server", "image_detection", {{"image_path", image}, {"txt_prompt", "warship tail number"}}, {}},
        1s);
    CHECK_FALSE(detection.is_error);
    CHECK(parse_detection_lines(detection.text()).size() == 2);

    const auto size = read_png_size(image);
    CHECK(size.width == 1240);
    CHECK(size.height == 980);
    CHECK_THROWS_AS(read_png_size("missing.png"), Error);
  }

  TEST_CASE("scripted tool server replays payloads in order") {
    ScriptedToolServer server("mcp_vision_server");
    server.enqueue(json{{"content", json::array({{{"type", "text"}, {"text", "first"}}})}, {"isError", false}});
    server.enqueue(json{{"result_image_path", "out.png"}, {"boxes", {"ship 0.5 1 2 3 4"}}});
    CHECK(server.call_tool(ToolCall{"mcp_vision_server", "anything", {}, {}}, 1s).text() == "first");
    const ToolResult flat = server.call_tool(ToolCall{"mcp_vision_server", "other", {}, {}}, 1s);
    CHECK(flat.paths() == std::vector<std::string>{"out.png"});
    CHECK(flat.text() == "boxes:\nship 0.5 1 2 3 4");
    CHECK(server.remaining() == 0);
    CHECK(server.received().size() == 2);
  }
}
