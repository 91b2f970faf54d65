// SPDX-License-Identifier: Apache-2.0
#include "vicot/tool_types.hpp"

#include <algorithm>

namespace vicot {

std::string_view to_string(ToolCategory category) {
  return category == ToolCategory::vision ? "vision" : "text";
}

ToolCategory category_from_string(std::string_view name) {
  if (name == "vision") return ToolCategory::vision;
  if (name == "text") return ToolCategory::text;
  throw Error(ErrorCode::Config, "unknown tool category '" + std::string(name) + "'");
}

std::vector<std::string> ToolDescriptor::property_names() const {
  std::vector<std::string> names;
  if (auto it = input_schema.find("properties"); it != input_schema.end() && it->is_object()) {
    for (const auto& [name, _] : it->items()) names.push_back(name);
  }
  return names;
}

std::vector<std::string> ToolDescriptor::required_properties() const {
  std::vector<std::string> names;
  if (auto it = input_schema.find("required"); it != input_schema.end() && it->is_array()) {
    for (const auto& name : *it) {
      if (name.is_string()) names.push_back(name.get<std::string>());
    }
  }
  return names;
}

bool arguments_satisfy(const ToolDescriptor& tool, const json& arguments) {
  if (!arguments.is_object()) return false;
  const auto required = tool.required_properties();
  return std::all_of(required.begin(), required.end(),
                     [&](const std::string& name) { return arguments.contains(name); });
}

std::string ToolResult::text() const {
  std::string out;
  for (const auto& item : content) {
    if (item.kind != ContentItem::Kind::text) continue;
    if (!out.empty()) out += '\n';
    out += item.value;
  }
  return out;
}

std::vector<std::string> ToolResult::paths() const {
  std::vector<std::string> out;
  for (const auto& item : content) {
    if (item.kind == ContentItem::Kind::path) out.push_back(item.value);
  }
  return out;
}

ToolResult ToolResult::error(std::string message) {
  ToolResult result;
  result.is_error = true;
  result.content.push_back({ContentItem::Kind::text, std::move(message)});
  result.raw = result.to_payload();
  return result;
}

ToolResult ToolResult::from_payload(const json& payload) {
  ToolResult result;
  result.raw = payload;
  if (!payload.is_object()) {
    return ToolResult::error("Error: malformed result payload: " + payload.dump());
  }
  result.is_error = payload.value("isError", false);
  if (auto v = payload.find("vlm_response"); v != payload.end() && v->is_string()) {
    result.vlm_response = v->get<std::string>();
  }
  if (auto it = payload.find("content"); it != payload.end() && it->is_array()) {
    for (const auto& item : *it) {
      const auto type = item.value("type", std::string{"text"});
      if (type == "path") {
        result.content.push_back({ContentItem::Kind::path, item.value("path", std::string{})});
      } else {
        result.content.push_back({ContentItem::Kind::text, item.value("text", std::string{})});
      }
    }
  } else {
    // Flat record shape: {"result_image_path", "boxes", "text"}.
    if (auto p = payload.find("result_image_path"); p != payload.end() && p->is_string()) {
      result.content.push_back({ContentItem::Kind::path, p->get<std::string>()});
    }
    if (auto b = payload.find("boxes"); b != payload.end() && b->is_array()) {
      std::string text = "boxes:";
      for (const auto& line : *b) text += "\n" + (line.is_string() ? line.get<std::string>() : line.dump());
      result.content.push_back({ContentItem::Kind::text, std::move(text)});
    }
    if (auto t = payload.find("text"); t != payload.end() && t->is_string()) {
      result.content.push_back({ContentItem::Kind::text, t->get<std::string>()});
    }
  }
  if (result.is_error && result.text().empty()) {
    result.content.push_back({ContentItem::Kind::text, "Error: tool reported failure without a message"});
  }
  return result;
}

json ToolResult::to_payload() const {
  json items = json::array();
  for (const auto& item : content) {
    if (item.kind == ContentItem::Kind::path) {
      items.push_back({{"type", "path"}, {"path", item.value}});
    } else {
      items.push_back({{"type", "text"}, {"text", item.value}});
    }
  }
  json payload = {{"content", std::move(items)}, {"isError", is_error}};
  if (vlm_response) payload["vlm_response"] = *vlm_response;
  return payload;
}

std::string_view to_string(EvidenceSource source) {
  switch (source) {
    case EvidenceSource::tool: return "tool";
    case EvidenceSource::server_vision: return "server_vision";
    case EvidenceSource::gateway_vision: return "gateway_vision";
    case EvidenceSource::host_feedback: return "host_feedback";
  }
  return "tool";
}

EvidenceSource evidence_source_from_string(std::string_view name) {
  if (name == "server_vision") return EvidenceSource::server_vision;
  if (name == "gateway_vision") return EvidenceSource::gateway_vision;
  if (name == "host_feedback") return EvidenceSource::host_feedback;
  return EvidenceSource::tool;
}

void to_json(json& j, const ToolDescriptor& d) {
  j = json{{"server_name", d.server_name},
           {"name", d.tool_name},
           {"description", d.description},
           {"input_schema", d.input_schema},
           {"category", to_string(d.category)}};
}

void from_json(const json& j, ToolDescriptor& d) {
  d.server_name = j.value("server_name", std::string{});
  d.tool_name = j.at("name").get<std::string>();
  d.description = j.value("description", std::string{});
  d.input_schema = j.value("input_schema", json::object());
  d.category = category_from_string(j.value("category", std::string{"vision"}));
}

void to_json(json& j, const ToolCall& c) {
  j = json{{"server_name", c.server_name}, {"tool_name", c.tool_name}, {"arguments", c.arguments}};
}

void from_json(const json& j, ToolCall& c) {
  c.server_name = j.at("server_name").get<std::string>();
  c.tool_name = j.at("tool_name").get<std::string>();
  c.arguments = j.value("arguments", json::object());
}

void to_json(json& j, const Evidence& e) {
  j = json{{"text", e.text},
           {"file_paths", e.file_paths},
           {"is_error", e.is_error},
           {"source", to_string(e.source)},
           {"payload", e.payload}};
}

void from_json(const json& j, Evidence& e) {
  e.text = j.at("text").get<std::string>();
  e.file_paths = j.value("file_paths", std::vector<std::string>{});
  e.is_error = j.value("is_error", false);
  e.source = evidence_source_from_string(j.value("source", std::string{"tool"}));
  e.payload = j.value("payload", std::string{});
}

}  // namespace vicot
