// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "vicot/cli.hpp"
#include "vicot/rs_toolset.hpp"

namespace vicot::cli {
namespace {

Error config_error(const std::string& message) { return Error(ErrorCode::Config, message); }

void check_keys(const toml::table& table, const std::string& where, std::initializer_list<std::string_view> allowed) {
  const std::set<std::string_view> names(allowed);
  for (const auto& [key, node] : table) {
    (void)node;
    if (!names.count(key.str())) throw config_error("unknown key '" + std::string(key.str()) + "' in " + where);
  }
}

template <typename T>
std::optional<T> get(const toml::table& table, std::string_view key, const std::string& where) {
  const toml::node* node = table.get(key);
  if (!node) return std::nullopt;
  auto value = node->value<T>();
  if (!value) throw config_error(where + "." + std::string(key) + " has the wrong type");
  return value;
}

std::size_t positive(const toml::table& table, std::string_view key, const std::string& where, std::size_t fallback) {
  auto v = get<std::int64_t>(table, key, where);
  if (!v) return fallback;
  if (*v < 1) throw config_error(where + "." + std::string(key) + " must be at least 1");
  return static_cast<std::size_t>(*v);
}

fs::path resolve(const fs::path& base, const std::string& value) {
  fs::path p(value);
  return p.is_absolute() ? p : base / p;
}

HttpChatConfig parse_http(const toml::table& table, const std::string& where) {
  HttpChatConfig http;
  http.endpoint = get<std::string>(table, "endpoint", where).value_or("");
  http.model = get<std::string>(table, "model", where).value_or("");
  http.token_env = get<std::string>(table, "token_env", where).value_or("");
  http.temperature = get<double>(table, "temperature", where).value_or(0.0);
  http.timeout = std::chrono::seconds(positive(table, "timeout_s", where, 120));
  return http;
}

void parse_run(const toml::table& table, const fs::path& base, RunConfig& run) {
  const std::string where = "[run]";
  check_keys(table, where,
             {"k", "max_rounds", "max_width", "retry_limit", "terminal_mode", "tool_scope", "describe_tool_outputs",
              "plausibility_margin", "call_timeout_ms", "templates_dir"});
  run.k = positive(table, "k", where, run.k);
  run.max_rounds = positive(table, "max_rounds", where, run.max_rounds);
  run.max_width = positive(table, "max_width", where, run.max_width);
  run.retry_limit = positive(table, "retry_limit", where, run.retry_limit);
  run.call_timeout = std::chrono::milliseconds(positive(table, "call_timeout_ms", where, run.call_timeout.count()));
  run.describe_tool_outputs = get<bool>(table, "describe_tool_outputs", where).value_or(run.describe_tool_outputs);
  run.plausibility_margin = get<double>(table, "plausibility_margin", where).value_or(run.plausibility_margin);
  try {
    if (auto mode = get<std::string>(table, "terminal_mode", where)) run.terminal_mode = terminal_mode_from_string(*mode);
    if (auto scope = get<std::string>(table, "tool_scope", where)) run.tool_scope = tool_scope_from_string(*scope);
  } catch (const Error& e) {
    throw config_error(e.what());
  }
  if (auto dir = get<std::string>(table, "templates_dir", where)) run.templates = Templates::load(resolve(base, *dir));
}

void parse_backend(const toml::table& table, const fs::path& base, BackendConfig& backend) {
  const std::string where = "[backend]";
  check_keys(table, where, {"kind", "script", "endpoint", "model", "token_env", "temperature", "timeout_s", "vision"});
  backend.kind = get<std::string>(table, "kind", where).value_or(backend.kind);
  if (backend.kind != "scripted" && backend.kind != "http") {
    throw config_error("[backend].kind must be \"scripted\" or \"http\", not '" + backend.kind + "'");
  }
  if (auto script = get<std::string>(table, "script", where)) backend.script = resolve(base, *script);
  backend.think = parse_http(table, where);
  if (const toml::node* vision = table.get("vision")) {
    const toml::table* vt = vision->as_table();
    if (!vt) throw config_error("[backend.vision] must be a table");
    check_keys(*vt, "[backend.vision]", {"endpoint", "model", "token_env", "temperature", "timeout_s"});
    HttpChatConfig v = parse_http(*vt, "[backend.vision]");
    if (v.endpoint.empty()) v.endpoint = backend.think.endpoint;
    if (v.token_env.empty()) v.token_env = backend.think.token_env;
    backend.vision = v;
  }
}

ServerConfig parse_server(const std::string& name, const toml::table& table, const fs::path& base) {
  const std::string where = "[servers." + name + "]";
  check_keys(table, where, {"command", "args", "env", "cwd", "builtin", "scripted"});
  ServerConfig server;
  server.name = name;
  const int forms = table.contains("command") + table.contains("builtin") + table.contains("scripted");
  if (forms != 1) throw config_error(where + " needs exactly one of command, builtin or scripted");
  if (auto builtin = get<std::string>(table, "builtin", where)) {
    if (*builtin != "desk") throw config_error(where + ": unknown builtin '" + *builtin + "'");
    server.kind = ServerConfig::Kind::builtin;
    server.builtin = *builtin;
  } else if (auto scripted = get<std::string>(table, "scripted", where)) {
    server.kind = ServerConfig::Kind::scripted;
    server.scripted = resolve(base, *scripted);
  } else {
    server.kind = ServerConfig::Kind::spawn;
    server.launch.server_name = name;
    server.launch.command = *get<std::string>(table, "command", where);
    if (const toml::node* args = table.get("args")) {
      const toml::array* list = args->as_array();
      if (!list) throw config_error(where + ".args must be an array of strings");
      for (const auto& a : *list) {
        auto s = a.value<std::string>();
        if (!s) throw config_error(where + ".args must be an array of strings");
        server.launch.args.push_back(*s);
      }
    }
    if (const toml::node* env = table.get("env")) {
      const toml::table* vars = env->as_table();
      if (!vars) throw config_error(where + ".env must be a table of strings");
      for (const auto& [key, value] : *vars) {
        auto s = value.value<std::string>();
        if (!s) throw config_error(where + ".env must be a table of strings");
        server.launch.env[std::string(key.str())] = *s;
      }
    }
    if (auto cwd = get<std::string>(table, "cwd", where)) server.launch.working_dir = resolve(base, *cwd);
  }
  return server;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw config_error("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

}  // namespace

AppConfig parse_config(std::string_view toml_text, const fs::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config: " << e.description() << " at line " << e.source().begin.line;
    throw config_error(msg.str());
  }
  check_keys(root, "config", {"run", "backend", "servers", "transport"});
  AppConfig config;
  auto table = [&](std::string_view key) -> const toml::table* {
    const toml::node* node = root.get(key);
    if (!node) return nullptr;
    if (!node->is_table()) throw config_error("[" + std::string(key) + "] must be a table");
    return node->as_table();
  };
  if (const auto* run = table("run")) parse_run(*run, base_dir, config.run);
  if (const auto* backend = table("backend")) parse_backend(*backend, base_dir, config.backend);
  if (const auto* transport = table("transport")) {
    check_keys(*transport, "[transport]", {"handshake_timeout_ms"});
    config.handshake_timeout =
        std::chrono::milliseconds(positive(*transport, "handshake_timeout_ms", "[transport]", 10000));
  }
  if (const auto* servers = table("servers")) {
    for (const auto& [name, node] : *servers) {
      const toml::table* server = node.as_table();
      if (!server) throw config_error("[servers." + std::string(name.str()) + "] must be a table");
      config.servers.push_back(parse_server(std::string(name.str()), *server, base_dir));
    }
  }
  try {
    config.run.validate();
  } catch (const Error& e) {
    throw config_error(e.what());
  }
  return config;
}

AppConfig load_config(const fs::path& path) {
  const std::string text = read_file(path);
  return parse_config(text, fs::absolute(path).parent_path());
}

Backends make_backends(const BackendConfig& config) {
  if (config.kind == "scripted") {
    if (config.script.empty()) throw config_error("[backend].script is required for the scripted backend");
    auto backend = ScriptedBackend::from_json(read_json(config.script));
    return {backend, backend};
  }
  if (config.kind == "http") {
    if (config.think.endpoint.empty()) throw config_error("[backend].endpoint is required for the http backend");
    auto think_backend = std::make_shared<HttpChatBackend>(config.think);
    std::shared_ptr<ModelBackend> vision_backend = think_backend;
    if (config.vision) vision_backend = std::make_shared<HttpChatBackend>(*config.vision);
    return {think_backend, vision_backend};
  }
  throw config_error("unknown backend kind '" + config.kind + "'");
}

ToolRouter make_router(const AppConfig& config) {
  ToolRouter router;
  for (const auto& server : config.servers) {
    switch (server.kind) {
      case ServerConfig::Kind::builtin: {
        auto desk = std::make_shared<InProcessServer>(server.name);
        register_desk_tools(*desk);
        router.add(desk);
        break;
      }
      case ServerConfig::Kind::scripted: {
        json payloads = read_json(server.scripted);
        if (payloads.is_object()) {
          const json& tools = payloads.contains("tools") ? payloads.at("tools") : json::object();
          payloads = tools.contains(server.name) ? tools.at(server.name) : json::array();
        }
        if (!payloads.is_array()) throw config_error("scripted payloads for '" + server.name + "' must be an array");
        std::vector<ToolDescriptor> advertised;
        for (auto& d : rs_tool_descriptors()) {
          if (d.server_name == server.name) advertised.push_back(std::move(d));
        }
        auto scripted = std::make_shared<ScriptedToolServer>(server.name, std::move(advertised));
        for (auto& p : payloads) scripted->enqueue(std::move(p));
        router.add(scripted);
        break;
      }
      case ServerConfig::Kind::spawn:
        router.add(spawn(server.launch, TransportOptions{config.handshake_timeout, config.run.call_timeout}));
        break;
    }
  }
  return router;
}

}  // namespace vicot::cli
