// SPDX-License-Identifier: Apache-2.0
#include "vicot/model_gateway.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "embedded_templates.hpp"

namespace vicot {
namespace {

std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex16(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read '" + path.string() + "'");
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::string excerpt(const std::string& body, std::size_t limit = 200) {
  return body.size() <= limit ? body : body.substr(0, limit) + "...";
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    case Role::tool: return "tool";
  }
  return "user";
}

Role role_from_string(std::string_view name) {
  if (name == "system") return Role::system;
  if (name == "user") return Role::user;
  if (name == "assistant") return Role::assistant;
  if (name == "tool") return Role::tool;
  throw Error(ErrorCode::InvalidRecord, "unknown role '" + std::string(name) + "'");
}

std::string_view to_string(Channel channel) {
  switch (channel) {
    case Channel::think: return "think";
    case Channel::rough: return "rough";
    case Channel::detailed: return "detailed";
  }
  return "think";
}

const std::string& PromptBundle::system_text() const {
  if (turns.empty() || turns.front().role != Role::system) {
    throw Error(ErrorCode::Precondition, "prompt bundle has no leading system turn");
  }
  return turns.front().content;
}

std::size_t PromptBundle::estimated_tokens() const {
  std::size_t total = 0;
  for (const auto& turn : turns) total += estimate_tokens(turn.content);
  return total;
}

std::string PromptBundle::transcript() const {
  std::string out;
  for (const auto& turn : turns) {
    out += "[";
    out += to_string(turn.role);
    out += "]\n";
    out += turn.content;
    out += "\n";
  }
  for (const auto& image : image_refs) out += "[image] " + image + "\n";
  return out;
}

std::uint64_t PromptBundle::hash() const { return fnv1a(transcript()); }

void ScriptedBackend::add(Channel channel, std::string text, std::optional<std::uint64_t> prompt_hash) {
  std::lock_guard lock(mutex_);
  auto& index = added_[channel];
  entries_[{channel, index}] = Entry{std::move(text), prompt_hash};
  ++index;
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_json(const json& script, std::string id) {
  auto backend = std::make_shared<ScriptedBackend>(std::move(id));
  auto load = [&](Channel channel, const json& entries) {
    if (!entries.is_array()) throw Error(ErrorCode::Config, "script channel must be an array");
    for (const auto& entry : entries) {
      if (entry.is_string()) {
        backend->add(channel, entry.get<std::string>());
      } else if (entry.is_object() && entry.contains("text")) {
        std::optional<std::uint64_t> guard;
        if (entry.contains("prompt_hash")) guard = std::stoull(entry.at("prompt_hash").get<std::string>(), nullptr, 16);
        backend->add(channel, entry.at("text").get<std::string>(), guard);
      } else {
        throw Error(ErrorCode::Config, "script entry must be a string or an object with \"text\"");
      }
    }
  };
  if (script.contains("think")) load(Channel::think, script.at("think"));
  if (script.contains("vision")) {
    const auto& vision = script.at("vision");
    if (vision.contains("rough")) load(Channel::rough, vision.at("rough"));
    if (vision.contains("detailed")) load(Channel::detailed, vision.at("detailed"));
  }
  return backend;
}

ModelTurn ScriptedBackend::complete(Channel channel, const PromptBundle& bundle) {
  const auto start = std::chrono::steady_clock::now();
  Entry entry;
  std::size_t index = 0;
  {
    std::lock_guard lock(mutex_);
    index = next_[channel];
    auto it = entries_.find({channel, index});
    if (it == entries_.end()) {
      throw Error(ErrorCode::BackendExhausted, std::string("scripted backend '") + id_ + "' has no " +
                                                   std::string(to_string(channel)) + " response #" +
                                                   std::to_string(index));
    }
    if (it->second.prompt_hash && *it->second.prompt_hash != bundle.hash()) {
      throw Error(ErrorCode::PromptDrift, std::string(to_string(channel)) + " request #" + std::to_string(index) +
                                              " hashes to " + hex16(bundle.hash()) + ", script expects " +
                                              hex16(*it->second.prompt_hash));
    }
    entry = it->second;
    ++next_[channel];
  }
  ModelTurn turn;
  turn.text = std::move(entry.text);
  turn.prompt_tokens = bundle.estimated_tokens();
  turn.completion_tokens = estimate_tokens(turn.text);
  turn.backend_id = id_;
  if (latency_per_token_.count() > 0) {
    std::this_thread::sleep_for(latency_per_token_ * static_cast<long>(turn.prompt_tokens));
  }
  turn.latency = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start);
  return turn;
}

std::size_t ScriptedBackend::consumed(Channel channel) const {
  std::lock_guard lock(mutex_);
  auto it = next_.find(channel);
  return it == next_.end() ? 0 : it->second;
}

std::size_t ScriptedBackend::remaining(Channel channel) const {
  std::lock_guard lock(mutex_);
  auto added = added_.find(channel);
  auto next = next_.find(channel);
  const std::size_t total = added == added_.end() ? 0 : added->second;
  const std::size_t used = next == next_.end() ? 0 : next->second;
  return total - used;
}

HttpChatBackend::HttpChatBackend(HttpChatConfig config) : config_(std::move(config)) {
  static const std::regex kUrl(R"(^(http://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.endpoint, m, kUrl)) {
    throw Error(ErrorCode::Config, "endpoint must be an http:// URL, got '" + config_.endpoint + "'");
  }
  scheme_host_ = m[1].str();
  path_ = m[2].matched ? m[2].str() : "/v1/chat/completions";
}

json HttpChatBackend::request_body(const PromptBundle& bundle) const {
  json messages = json::array();
  bool images_attached = false;
  for (const auto& turn : bundle.turns) {
    // Generic endpoints reject "tool" turns that lack a tool_call_id, so results go in as user turns.
    const std::string role = turn.role == Role::tool ? "user" : std::string(to_string(turn.role));
    if (turn.role == Role::user && !images_attached && !bundle.image_refs.empty()) {
      json parts = json::array({{{"type", "text"}, {"text", turn.content}}});
      for (const auto& image : bundle.image_refs) {
        const std::string url = "data:image/png;base64," + httplib::detail::base64_encode(read_file(image));
        parts.push_back({{"type", "image_url"}, {"image_url", {{"url", url}}}});
      }
      messages.push_back({{"role", role}, {"content", std::move(parts)}});
      images_attached = true;
    } else {
      messages.push_back({{"role", role}, {"content", turn.content}});
    }
  }
  return {{"model", config_.model}, {"messages", std::move(messages)}, {"temperature", config_.temperature}};
}

ModelTurn HttpChatBackend::complete(Channel, const PromptBundle& bundle) {
  const auto start = std::chrono::steady_clock::now();
  httplib::Client client(scheme_host_);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  httplib::Headers headers;
  if (!config_.token_env.empty()) {
    if (const char* token = std::getenv(config_.token_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
  }
  auto response = client.Post(path_, headers, request_body(bundle).dump(), "application/json");
  if (!response) {
    const auto err = response.error();
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
      throw Error(ErrorCode::Timeout, "chat endpoint " + config_.endpoint + ": " + httplib::to_string(err));
    }
    throw Error(ErrorCode::EndpointError, "chat endpoint " + config_.endpoint + ": " + httplib::to_string(err));
  }
  if (response->status != 200) {
    throw Error(ErrorCode::EndpointError,
                "chat endpoint returned status " + std::to_string(response->status) + ": " + excerpt(response->body));
  }
  ModelTurn turn;
  try {
    const json body = json::parse(response->body);
    turn.text = body.at("choices").at(0).at("message").at("content").get<std::string>();
    if (auto usage = body.find("usage"); usage != body.end() && usage->is_object()) {
      turn.prompt_tokens = usage->value("prompt_tokens", bundle.estimated_tokens());
      turn.completion_tokens = usage->value("completion_tokens", estimate_tokens(turn.text));
    } else {
      turn.prompt_tokens = bundle.estimated_tokens();
      turn.completion_tokens = estimate_tokens(turn.text);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::EndpointError, std::string("unexpected chat response: ") + e.what() + ": " +
                                              excerpt(response->body));
  }
  turn.backend_id = backend_id();
  turn.latency = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start);
  return turn;
}

const Templates& Templates::defaults() {
  static const Templates templates = [] {
    const auto& embedded = detail::embedded_templates();
    Templates t;
    t.system = embedded.at("system");
    t.rough_description = embedded.at("rough_description");
    t.detailed_description = embedded.at("detailed_description");
    t.user_turn = embedded.at("user_turn");
    t.integration = embedded.at("integration");
    t.bench_system = embedded.at("bench_system");
    return t;
  }();
  return templates;
}

Templates Templates::load(const std::filesystem::path& dir) {
  Templates t = defaults();
  const std::pair<const char*, std::string*> slots[] = {
      {"system", &t.system},         {"rough_description", &t.rough_description},
      {"detailed_description", &t.detailed_description}, {"user_turn", &t.user_turn},
      {"integration", &t.integration}, {"bench_system", &t.bench_system},
  };
  for (const auto& [name, slot] : slots) {
    const auto path = dir / (std::string(name) + ".txt");
    if (std::filesystem::exists(path)) *slot = read_file(path);
  }
  return t;
}

std::string fill(std::string_view text, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto open = text.find('{', pos);
    if (open == std::string_view::npos) break;
    const auto close = text.find('}', open + 1);
    if (close == std::string_view::npos) break;
    out.append(text.substr(pos, open - pos));
    const std::string key(text.substr(open + 1, close - open - 1));
    if (auto it = values.find(key); it != values.end()) {
      out += it->second;
    } else {
      out.append(text.substr(open, close - open + 1));
    }
    pos = close + 1;
  }
  out.append(text.substr(std::min(pos, text.size())));
  return out;
}

ModelTurn think(ModelBackend& backend, const PromptBundle& bundle) { return backend.complete(Channel::think, bundle); }

ModelTurn describe_unchecked(ModelBackend& backend, const std::string& image_ref, DescribeMode mode,
                             std::string_view context, const Templates& templates) {
  const bool rough = mode == DescribeMode::rough;
  PromptBundle bundle;
  const std::map<std::string, std::string> values = {{"image_path", image_ref}, {"user_context", std::string(context)}};
  bundle.turns.push_back({Role::system, fill(rough ? templates.rough_description : templates.detailed_description, values)});
  bundle.turns.push_back({Role::user, "Image: " + image_ref});
  bundle.image_refs.push_back(image_ref);
  return backend.complete(rough ? Channel::rough : Channel::detailed, bundle);
}

ModelTurn describe(ModelBackend& backend, const std::string& image_ref, DescribeMode mode, std::string_view context,
                   const Templates& templates) {
  if (!std::filesystem::exists(image_ref)) {
    throw Error(ErrorCode::Precondition, "image '" + image_ref + "' does not exist");
  }
  return describe_unchecked(backend, image_ref, mode, context, templates);
}

std::string render_origin(const Origin& origin, const Templates& templates) {
  return fill(templates.user_turn,
              {{"user_query", origin.query}, {"caption", origin.caption}, {"image_path", origin.image_ref}});
}

std::vector<Turn> render_frame(const ReasoningFrame& frame) {
  std::vector<Turn> turns{{Role::assistant, frame.decision}};
  if (frame.evidence) turns.push_back({frame.match ? Role::tool : Role::user, frame.evidence->text});
  return turns;
}

namespace {

PromptBundle assemble(const ReasoningStack& stack, std::span<const ReasoningFrame> frames, const Templates& templates,
                      std::string_view tools_xml, const std::optional<std::string>& system_override) {
  PromptBundle bundle;
  bundle.turns.push_back(
      {Role::system, system_override ? *system_override
                                     : fill(templates.system, {{"available_tools", std::string(tools_xml)}})});
  bundle.turns.push_back({Role::user, render_origin(stack.origin(), templates)});
  if (!stack.origin().image_ref.empty()) bundle.image_refs.push_back(stack.origin().image_ref);
  for (const auto& frame : frames) {
    for (auto& turn : render_frame(frame)) bundle.turns.push_back(std::move(turn));
  }
  return bundle;
}

}  // namespace

PromptBundle assemble_context(const ReasoningStack& stack, std::size_t k, const Templates& templates,
                              std::string_view tools_xml, const std::optional<std::string>& system_override) {
  return assemble(stack, stack.window(k), templates, tools_xml, system_override);
}

PromptBundle assemble_full_context(const ReasoningStack& stack, const Templates& templates, std::string_view tools_xml,
                                   const std::optional<std::string>& system_override) {
  return assemble(stack, stack.frames(), templates, tools_xml, system_override);
}

}  // namespace vicot
