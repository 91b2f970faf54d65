// SPDX-License-Identifier: Apache-2.0
#include "vicot/trace_store.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace vicot {
namespace {

constexpr std::string_view kStateSearchPrefix = "[state search]";

Message text_message(Role role, std::string text) { return Message{role, {{MessagePart::Kind::text, std::move(text)}}}; }

bool is_terminal(std::string_view text) {
  try {
    return parse_structured_output(text).has_value();
  } catch (const Error&) {
    return false;
  }
}

std::optional<ToolCall> try_parse_call(std::string_view text) {
  try {
    return parse_tool_call(text);
  } catch (const Error&) {
    return std::nullopt;
  }
}

/// A malformed call recorded together with the host's error feedback on it.
bool answered_by_feedback(const json& messages, std::size_t i) {
  if (i + 1 >= messages.size()) return false;
  const auto& next = messages[i + 1];
  if (!next.is_object() || next.value("role", "") != "user" || !next.contains("content") ||
      !next.at("content").is_array() || next.at("content").empty()) {
    return false;
  }
  const auto& part = next.at("content").front();
  return part.is_object() && part.value("type", "") == "text" && part.contains("text") && part.at("text").is_string() &&
         part.at("text").get<std::string>().rfind(kErrorMarker, 0) == 0;
}

}  // namespace

std::string Message::text() const {
  std::string out;
  bool first = true;
  for (const auto& part : content) {
    if (part.kind != MessagePart::Kind::text) continue;
    if (!first) out += "\n";
    out += part.value;
    first = false;
  }
  return out;
}

std::vector<std::string> Message::images() const {
  std::vector<std::string> out;
  for (const auto& part : content) {
    if (part.kind == MessagePart::Kind::image) out.push_back(part.value);
  }
  return out;
}

ordered_json TrajectoryRecord::to_json() const {
  ordered_json messages_json = ordered_json::array();
  for (const auto& m : messages) {
    ordered_json parts = ordered_json::array();
    for (const auto& p : m.content) {
      if (p.kind == MessagePart::Kind::text) {
        parts.push_back(ordered_json{{"type", "text"}, {"text", p.value}});
      } else {
        parts.push_back(ordered_json{{"type", "image"}, {"image", p.value}});
      }
    }
    messages_json.push_back(ordered_json{{"role", to_string(m.role)}, {"content", std::move(parts)}});
  }
  return ordered_json{{"id", id}, {"messages", std::move(messages_json)}};
}

TrajectoryRecord TrajectoryRecord::from_json(const json& j) {
  auto fail = [](const std::string& why) { return Error(ErrorCode::InvalidRecord, why); };
  if (!j.is_object() || !j.contains("id") || !j.at("id").is_string()) throw fail("record needs a string \"id\"");
  if (!j.contains("messages") || !j.at("messages").is_array()) throw fail("record needs a \"messages\" array");
  TrajectoryRecord record;
  record.id = j.at("id").get<std::string>();
  for (const auto& m : j.at("messages")) {
    if (!m.is_object() || !m.contains("role") || !m.at("role").is_string() || !m.contains("content") ||
        !m.at("content").is_array()) {
      throw fail("message needs a string \"role\" and a \"content\" array");
    }
    Message message{role_from_string(m.at("role").get<std::string>()), {}};
    for (const auto& p : m.at("content")) {
      const std::string type = p.is_object() ? p.value("type", "") : "";
      if (type == "text" && p.contains("text") && p.at("text").is_string()) {
        message.content.push_back({MessagePart::Kind::text, p.at("text").get<std::string>()});
      } else if (type == "image" && p.contains("image") && p.at("image").is_string()) {
        message.content.push_back({MessagePart::Kind::image, p.at("image").get<std::string>()});
      } else {
        throw fail("content part must be {\"type\":\"text\",\"text\":string} or {\"type\":\"image\",\"image\":string}");
      }
    }
    record.messages.push_back(std::move(message));
  }
  return record;
}

std::string tool_instruction(const std::string& image_ref) {
  return "Call tools as needed based on the description above; the image path is " + image_ref;
}

TrajectoryRecord serialize_stack(const ReasoningStack& stack, const RunMeta& meta) {
  if (stack.empty() || !is_terminal(stack.top().decision)) {
    throw Error(ErrorCode::IncompleteRun, "stack does not end in a terminal answer");
  }
  const Origin& origin = stack.origin();
  TrajectoryRecord record;
  record.id = meta.id;
  record.messages.push_back(text_message(Role::system, meta.system_text));
  Message user{Role::user, {{MessagePart::Kind::text, origin.query}}};
  if (!origin.image_ref.empty()) user.content.push_back({MessagePart::Kind::image, origin.image_ref});
  record.messages.push_back(std::move(user));
  record.messages.push_back(text_message(Role::assistant, origin.caption));
  record.messages.push_back(text_message(Role::user, tool_instruction(origin.image_ref)));
  for (const auto& frame : stack.frames()) {
    record.messages.push_back(text_message(Role::assistant, frame.decision));
    if (!frame.evidence) continue;
    if (frame.match) {
      record.messages.push_back(text_message(Role::tool, frame.evidence->payload));
    } else {
      record.messages.push_back(text_message(Role::user, frame.evidence->text));
    }
  }
  return record;
}

TrajectoryRecord serialize_run(const RunReport& report, const std::string& id) {
  return serialize_stack(report.stack, RunMeta{id, report.system_text});
}

std::string ValidationReport::to_string() const {
  std::string out;
  for (const auto& v : violations) {
    out += v.message_index ? "message " + std::to_string(*v.message_index) : std::string("record");
    out += ": " + v.code + ": " + v.message + "\n";
  }
  return out;
}

ValidationReport validate(const json& record) {
  ValidationReport report;
  auto add = [&](std::optional<std::size_t> index, std::string code, std::string message) {
    report.violations.push_back({index, std::move(code), std::move(message)});
  };
  if (!record.is_object()) {
    add(std::nullopt, "Shape", "record is not a JSON object");
    return report;
  }
  if (!record.contains("id") || !record.at("id").is_string()) add(std::nullopt, "Shape", "missing string \"id\"");
  if (!record.contains("messages") || !record.at("messages").is_array() || record.at("messages").empty()) {
    add(std::nullopt, "Shape", "missing or empty \"messages\" array");
    return report;
  }

  const auto& messages = record.at("messages");
  std::set<std::string> declared_images;
  std::string tool_payloads;
  bool seen_user = false;
  bool previous_assistant_call = false;
  std::string last_role;
  std::string last_text;

  for (std::size_t i = 0; i < messages.size(); ++i) {
    const auto& m = messages[i];
    const bool was_assistant_call = previous_assistant_call;
    previous_assistant_call = false;
    last_role.clear();
    last_text.clear();
    if (!m.is_object() || !m.contains("role") || !m.at("role").is_string()) {
      add(i, "Shape", "message needs a string \"role\"");
      continue;
    }
    const std::string role = m.at("role").get<std::string>();
    if (role != "system" && role != "user" && role != "assistant" && role != "tool") {
      add(i, "Shape", "unknown role '" + role + "'");
      continue;
    }
    if (!m.contains("content") || !m.at("content").is_array()) {
      add(i, "Shape", "message needs a \"content\" array");
      continue;
    }
    std::string text;
    std::vector<std::string> images;
    bool parts_ok = true;
    for (const auto& p : m.at("content")) {
      const std::string type = p.is_object() ? p.value("type", "") : "";
      if (type == "text") {
        if (!p.contains("text") || !p.at("text").is_string()) {
          add(i, "Shape", "text part must carry a string \"text\"");
          parts_ok = false;
          continue;
        }
        if (!text.empty()) text += "\n";
        text += p.at("text").get<std::string>();
      } else if (type == "image") {
        if (!p.contains("image") || !p.at("image").is_string() || p.at("image").get<std::string>().empty()) {
          add(i, "Shape", "image part must carry a non-empty string \"image\"");
          parts_ok = false;
          continue;
        }
        images.push_back(p.at("image").get<std::string>());
      } else {
        add(i, "Shape", "content part type must be text or image");
        parts_ok = false;
      }
    }
    last_role = role;
    last_text = text;

    if (i == 0 && role != "system") add(i, "Order", "first message must have role system");
    if (i != 0 && role == "system") add(i, "Order", "system message after the first message");

    for (const auto& image : images) {
      if (role == "user" && !seen_user) {
        declared_images.insert(image);
      } else if (!declared_images.count(image) && tool_payloads.find(image) == std::string::npos) {
        add(i, "UndeclaredImage", "image '" + image + "' was not declared by the user or a tool result");
      }
    }
    if (role == "user") seen_user = true;

    if (role == "assistant" && text.find("<use_mcp_tool") != std::string::npos) {
      try {
        previous_assistant_call = parse_tool_call(text).has_value();
      } catch (const Error& e) {
        if (!answered_by_feedback(messages, i)) add(i, std::string(to_string(e.code())), e.what());
      }
    }
    if (role == "tool") {
      if (!was_assistant_call) add(i, "Order", "tool message is not preceded by an assistant tool call");
      if (parts_ok) {
        if (!json::accept(text)) add(i, "ToolPayload", "tool message text is not valid JSON");
      }
      tool_payloads += text;
      tool_payloads += '\n';
    }
  }

  const std::size_t last = messages.size() - 1;
  if (last_role != "assistant") {
    add(last, "Terminal", "last message must be an assistant answer");
  } else {
    try {
      if (!parse_structured_output(last_text)) add(last, "Terminal", "final answer has neither SOAP sections nor <end>");
    } catch (const Error& e) {
      add(last, std::string(to_string(e.code())), e.what());
    }
  }
  return report;
}

ValidationReport validate(const TrajectoryRecord& record) { return validate(json::parse(record.to_json().dump())); }

json DatasetStats::to_json() const {
  json steps = json::object();
  for (const auto& [n, count] : steps_per_record) steps[std::to_string(n)] = count;
  return {{"n_records", n_records},   {"steps_per_record", steps},     {"mean_steps", mean_steps},
          {"total_tokens_est", total_tokens_est}, {"tool_call_counts", tool_call_counts},
          {"distinct_images", distinct_images}};
}

std::size_t count_steps(const TrajectoryRecord& record) {
  std::size_t steps = 0;
  for (const auto& m : record.messages) {
    if (m.role == Role::assistant && try_parse_call(m.text())) ++steps;
  }
  for (auto it = record.messages.rbegin(); it != record.messages.rend(); ++it) {
    if (it->role != Role::assistant) continue;
    if (is_terminal(it->text())) ++steps;
    break;
  }
  return steps;
}

DatasetStats stats(std::span<const TrajectoryRecord> dataset) {
  DatasetStats out;
  std::set<std::string> images;
  std::size_t step_sum = 0;
  for (const auto& record : dataset) {
    ++out.n_records;
    const std::size_t steps = count_steps(record);
    ++out.steps_per_record[steps];
    step_sum += steps;
    for (const auto& m : record.messages) {
      for (const auto& p : m.content) {
        if (p.kind == MessagePart::Kind::text) {
          out.total_tokens_est += estimate_tokens(p.value);
        } else if (m.role == Role::user) {
          images.insert(p.value);
        }
      }
      if (m.role == Role::assistant) {
        if (auto call = try_parse_call(m.text())) ++out.tool_call_counts[call->tool_name];
      }
    }
  }
  out.distinct_images = images.size();
  out.mean_steps = out.n_records ? static_cast<double>(step_sum) / static_cast<double>(out.n_records) : 0.0;
  return out;
}

ToolRouter ReplayBundle::router() const {
  ToolRouter r;
  for (const auto& s : servers) r.add(s);
  return r;
}

ReplayBundle replay(const TrajectoryRecord& record) {
  auto fail = [](const std::string& why) { return Error(ErrorCode::InvalidRecord, why); };
  if (auto report = validate(record); !report.ok()) throw fail("record does not validate:\n" + report.to_string());
  const auto& messages = record.messages;
  if (messages.size() < 5 || messages[1].role != Role::user || messages[1].images().empty() ||
      messages[2].role != Role::assistant || messages[3].role != Role::user) {
    throw fail("record lacks the system, user, caption, instruction opening");
  }

  ReplayBundle bundle;
  bundle.query = messages[1].text();
  bundle.image_ref = messages[1].images().front();
  bundle.think = std::make_shared<ScriptedBackend>("replay-think");
  bundle.vision = std::make_shared<ScriptedBackend>("replay-vision");
  bundle.vision->add(Channel::rough, messages[2].text());
  bundle.backends = Backends{bundle.think, bundle.vision};

  const std::string system_text = messages[0].text();
  std::map<std::string, std::vector<ToolDescriptor>> descriptors;
  for (auto& d : parse_tool_xml(system_text)) descriptors[d.server_name].push_back(std::move(d));
  std::map<std::string, std::shared_ptr<ScriptedToolServer>> servers;
  auto server = [&](const std::string& name) {
    auto& s = servers[name];
    if (!s) s = std::make_shared<ScriptedToolServer>(name, descriptors[name]);
    return s;
  };
  for (const auto& [name, tools] : descriptors) server(name);

  std::size_t think_turns = 0;
  std::optional<ToolCall> last_call;
  for (std::size_t i = 4; i < messages.size(); ++i) {
    const auto& m = messages[i];
    const std::string text = m.text();
    if (m.role == Role::assistant) {
      if (text.rfind(kStateSearchPrefix, 0) == 0) {
        throw fail("message " + std::to_string(i) + " comes from a state search, which drops turns");
      }
      bundle.think->add(Channel::think, text);
      ++think_turns;
      last_call = try_parse_call(text);
    } else if (m.role == Role::tool) {
      json payload = json::parse(text);
      if (payload.is_object() && payload.value("origin", "") == "host") continue;
      if (!last_call) throw fail("tool message " + std::to_string(i) + " has no preceding call");
      if (auto g = payload.find("gateway_vlm_response"); g != payload.end()) {
        bundle.vision->add(Channel::detailed, g->get<std::string>());
        bundle.config.describe_tool_outputs = true;
        payload.erase("gateway_vlm_response");
      }
      server(last_call->server_name)->enqueue(std::move(payload));
    }
  }
  for (auto& [name, s] : servers) bundle.servers.push_back(s);

  bundle.config.system_text = system_text;
  bundle.config.max_rounds = std::max<std::size_t>(think_turns, 1);
  bundle.config.retry_limit = think_turns + 1;
  bundle.config.terminal_mode = TerminalMode::either;
  bundle.config.require_image = false;
  return bundle;
}

std::vector<json> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read dataset '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  std::vector<json> records;
  try {
    if (first != std::string::npos && text[first] == '[') {
      for (auto& r : json::parse(text)) records.push_back(std::move(r));
    } else {
      std::istringstream lines(text);
      for (std::string line; std::getline(lines, line);) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        records.push_back(json::parse(line));
      }
    }
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidRecord, "'" + path.string() + "' is not valid JSON: " + e.what());
  }
  return records;
}

void write_dataset(const std::filesystem::path& path, std::span<const TrajectoryRecord> records) {
  ordered_json array = ordered_json::array();
  for (const auto& r : records) array.push_back(r.to_json());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write dataset '" + path.string() + "'");
  out << array.dump(2) << "\n";
}

}  // namespace vicot
