#include <doctest.h>

#include <fstream>
#include <sstream>

#include "testkit.hpp"

using namespace vicot;
using namespace vicot::cli;

namespace {

ErrorCode config_error(std::string_view text) {
  try {
    parse_config(text, "/base");
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("config accepted: " << text);
  return ErrorCode::Precondition;
}

RunArgs walkthrough_args() {
  RunArgs args;
  args.image = testkit::fixture("walkthrough/test.png");
  args.query = "Identify the ship and its tail number.";
  args.config = testkit::fixture("walkthrough/config.toml");
  return args;
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / "vicot_cli_test") { fs::create_directories(path); }
  ~TempDir() { fs::remove_all(path); }
  fs::path write(const std::string& name, const std::string& body) const {
    std::ofstream(path / name) << body;
    return path / name;
  }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("parse_config") {
    const AppConfig config = parse_config(R"(
[run]
k = 2
max_rounds = 5
terminal_mode = "soap"
tool_scope = "coarse_to_fine"

[backend]
kind = "scripted"
script = "script.json"

[transport]
handshake_timeout_ms = 2500

[servers.vision]
command = "python3"
args = ["-m", "ref_tool_server"]
env = { PYTHONUNBUFFERED = "1" }
cwd = "tools"

[servers.desk]
builtin = "desk"
)",
                                          "/base");
    CHECK(config.run.k == 2);
    CHECK(config.run.max_rounds == 5);
    CHECK(config.run.terminal_mode == TerminalMode::soap);
    CHECK(config.run.tool_scope == ToolScope::coarse_to_fine);
    CHECK(config.backend.script == fs::path("/base/script.json"));
    CHECK(config.handshake_timeout == std::chrono::milliseconds(2500));
    REQUIRE(config.servers.size() == 2);
    const auto& vision = config.servers[1].name == "vision" ? config.servers[1] : config.servers[0];
    CHECK(vision.kind == ServerConfig::Kind::spawn);
    CHECK(vision.launch.command == "python3");
    CHECK(vision.launch.args == std::vector<std::string>{"-m", "ref_tool_server"});
    CHECK(vision.launch.env.at("PYTHONUNBUFFERED") == "1");
    CHECK(vision.launch.working_dir == fs::path("/base/tools"));

    CHECK(config_error("[run]\nwindow = 3\n") == ErrorCode::Config);
    CHECK(config_error("[extra]\n") == ErrorCode::Config);
    CHECK(config_error("[run]\nk = 0\n") == ErrorCode::Config);
    CHECK(config_error("[run]\nk = \"three\"\n") == ErrorCode::Config);
    CHECK(config_error("[run]\nterminal_mode = \"prose\"\n") == ErrorCode::Config);
    CHECK(config_error("[backend]\nkind = \"grpc\"\n") == ErrorCode::Config);
    CHECK(config_error("[servers.x]\nbuiltin = \"desk\"\ncommand = \"y\"\n") == ErrorCode::Config);
    CHECK(config_error("[servers.x]\nbuiltin = \"lab\"\n") == ErrorCode::Config);
    CHECK(config_error("[run\n") == ErrorCode::Config);

    try {
      load_config("/nonexistent/config.toml");
      FAIL("missing config loaded");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Io);
    }
  }

  TEST_CASE("run exit codes") {
    std::ostringstream out, err;
    CHECK(cmd_run(walkthrough_args(), out, err) == kExitOk);
    CHECK(out.str().find("<S>") != std::string::npos);
    CHECK(out.str().find("</P>") != std::string::npos);

    RunArgs limited = walkthrough_args();
    limited.max_rounds = 1;
    std::ostringstream out2, err2;
    CHECK(cmd_run(limited, out2, err2) == kExitRoundLimit);
    CHECK(err2.str().find("round_limit") != std::string::npos);

    RunArgs missing = walkthrough_args();
    missing.image = "/nonexistent/scene.png";
    std::ostringstream out3, err3;
    CHECK(cmd_run(missing, out3, err3) == kExitFailure);

    RunArgs bad_config = walkthrough_args();
    bad_config.config = "/nonexistent/config.toml";
    std::ostringstream out4, err4;
    CHECK(cmd_run(bad_config, out4, err4) == kExitFailure);
  }

  TEST_CASE("run writes a valid trace") {
    TempDir dir;
    RunArgs args = walkthrough_args();
    args.out_trace = dir.path / "trace.json";
    args.json = true;
    std::ostringstream out, err;
    REQUIRE(cmd_run(args, out, err) == kExitOk);
    const json summary = json::parse(out.str());
    CHECK(summary["outcome"] == "completed");
    CHECK(summary["tool_calls"] == 3);
    std::ostringstream vout, verr;
    CHECK(cmd_validate(*args.out_trace, false, vout, verr) == kExitOk);
    std::ostringstream rout, rerr;
    CHECK(cmd_replay(*args.out_trace, std::nullopt, rout, rerr) == kExitOk);
    CHECK(rout.str().find("identical") != std::string::npos);
  }

  TEST_CASE("bench") {
    BenchArgs args;
    args.json = true;
    std::ostringstream out, err;
    REQUIRE(cmd_bench(args, out, err) == kExitOk);
    const json j = json::parse(out.str());
    CHECK(j["token_reduction"].get<double>() >= 0.60);
    CHECK(j["rows"].size() == 10);

    BenchArgs text_args;
    std::ostringstream text, terr;
    CHECK(cmd_bench(text_args, text, terr) == kExitOk);
    CHECK(text.str().find("token reduction: ") != std::string::npos);

    TempDir dir;
    BenchArgs bad;
    bad.scenario = dir.write("bad.json", R"({"rounds": 0})").string();
    std::ostringstream bout, berr;
    CHECK(cmd_bench(bad, bout, berr) == kExitFailure);
    bad.scenario = dir.write("broken.json", "{").string();
    CHECK(cmd_bench(bad, bout, berr) == kExitFailure);
    bad.scenario = (dir.path / "absent.json").string();
    CHECK(cmd_bench(bad, bout, berr) == kExitFailure);

    BenchArgs custom;
    custom.scenario = dir.write("short.json", R"({"rounds": 4, "k": 2})").string();
    const BenchOutcome outcome = run_bench(custom);
    CHECK(outcome.stack.rounds == 4);
    CHECK(outcome.table.rows.size() == 4);
  }

  TEST_CASE("validate, replay and stats on datasets") {
    TempDir dir;
    const fs::path a4 = testkit::fixture("dataset/a4_demo.json");
    std::ostringstream out, err;
    CHECK(cmd_validate(a4, true, out, err) == kExitOk);
    CHECK(json::parse(out.str())["invalid"] == 0);

    std::ostringstream sout, serr;
    CHECK(cmd_stats(a4, sout, serr) == kExitOk);
    CHECK(json::parse(sout.str())["n_records"] == 1);

    const fs::path bad = dir.write("bad.json", R"([{"id": "x", "messages": [{"role": "user", "content": []}]}])");
    std::ostringstream bout, berr;
    CHECK(cmd_validate(bad, false, bout, berr) == kExitViolations);
    CHECK(bout.str().find("violation") != std::string::npos);

    const fs::path broken = dir.write("broken.json", "[{");
    std::ostringstream kout, kerr;
    CHECK(cmd_validate(broken, false, kout, kerr) == kExitViolations);
    CHECK(cmd_stats(broken, kout, kerr) == kExitViolations);
    CHECK(cmd_validate(dir.path / "absent.json", false, kout, kerr) == kExitFailure);
    CHECK(cmd_replay(dir.path / "absent.json", std::nullopt, kout, kerr) == kExitFailure);

    std::ostringstream rout, rerr;
    const fs::path again = dir.path / "again.json";
    cmd_replay(a4, again, rout, rerr);
    CHECK(fs::exists(again));
    CHECK(load_dataset(again).size() == 1);
  }

  TEST_CASE("tile") {
    TileArgs args;
    args.image = testkit::fixture("walkthrough/test.png");
    std::ostringstream out, err;
    CHECK(cmd_tile(args, out, err) == kExitOk);
    CHECK(out.str().find("2×3 grid") != std::string::npos);
    CHECK(out.str().find("Region [1,2] [1024, 512, 1240, 980)") != std::string::npos);

    args.query = "warship tail number";
    args.json = true;
    std::ostringstream jout, jerr;
    CHECK(cmd_tile(args, jout, jerr) == kExitOk);
    const json j = json::parse(jout.str());
    REQUIRE(j["kept"].size() == 1);
    CHECK(j["kept"][0]["tag"] == "Region [0,0]");
    CHECK(j["discarded"].size() == 5);

    TileArgs missing;
    missing.image = "/nonexistent.png";
    CHECK(cmd_tile(missing, out, err) == kExitFailure);
    TileArgs zero = TileArgs{args.image, 0, std::nullopt, false};
    CHECK(cmd_tile(zero, out, err) == kExitFailure);
  }

  TEST_CASE("conform") {
    ConformArgs args;
    args.server_name = "double";
    args.command = testkit::test_server();
    args.args = {"normal"};
    args.script = testkit::fixture("conformance/session.json");
    std::ostringstream out, err;
    CHECK(cmd_conform(args, out, err) == kExitOk);
    std::vector<std::string> lines;
    std::istringstream in(out.str());
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    REQUIRE(lines.size() == 24);
    CHECK(lines[0] == R"(> {"id":0,"kind":"hello","payload":{"protocol_version":1}})");
    CHECK(lines[2].rfind(R"(> {"id":1,"kind":"list_tools")", 0) == 0);
    CHECK(lines[23].rfind(R"(< {"id":11,"kind":"result")", 0) == 0);

    std::ostringstream again, again_err;
    cmd_conform(args, again, again_err);
    CHECK(again.str() == out.str());

    ConformArgs dying = args;
    dying.args = {"exit"};
    std::ostringstream dout, derr;
    CHECK(cmd_conform(dying, dout, derr) == kExitFailure);

    TempDir dir;
    ConformArgs crash = args;
    crash.script = dir.write("crash.json", R"([{"tool_name": "echo", "arguments": {"text": "a"}}, {"tool_name": "die"}])");
    std::ostringstream cout_, cerr_;
    CHECK(cmd_conform(crash, cout_, cerr_) == kExitViolations);
  }

  TEST_CASE("the command-line binary") {
    const std::string command = testkit::cli_binary() + " tile " + testkit::fixture("walkthrough/test.png").string() +
                                " > /dev/null";
    CHECK(std::system(command.c_str()) == 0);
    CHECK(std::system((testkit::cli_binary() + " nosuchcommand > /dev/null 2>&1").c_str()) != 0);
  }
}
