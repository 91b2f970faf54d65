// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vicot/error.hpp"

namespace vicot {

using json = nlohmann::json;

enum class ToolCategory { vision, text };

std::string_view to_string(ToolCategory category);
ToolCategory category_from_string(std::string_view name);

/// One tool advertised by a server. `input_schema` is a JSON-schema-like object:
/// {"type":"object","properties":{name:{"type":...}},"required":[...]}.
struct ToolDescriptor {
  std::string server_name;
  std::string tool_name;
  std::string description;
  json input_schema = json::object();
  ToolCategory category = ToolCategory::vision;

  std::vector<std::string> property_names() const;
  std::vector<std::string> required_properties() const;

  friend bool operator==(const ToolDescriptor&, const ToolDescriptor&) = default;
};

/// A parsed invocation. Equality ignores `raw_span`, which only locates the block in its source.
struct ToolCall {
  std::string server_name;
  std::string tool_name;
  json arguments = json::object();
  ByteSpan raw_span;

  friend bool operator==(const ToolCall& a, const ToolCall& b) {
    return a.server_name == b.server_name && a.tool_name == b.tool_name && a.arguments == b.arguments;
  }
};

/// True when every required property of `tool` is present in `arguments`.
bool arguments_satisfy(const ToolDescriptor& tool, const json& arguments);

struct ContentItem {
  enum class Kind { text, path };
  Kind kind = Kind::text;
  std::string value;

  friend bool operator==(const ContentItem&, const ContentItem&) = default;
};

struct ToolResult {
  std::vector<ContentItem> content;
  bool is_error = false;
  /// Description produced by the server's own vision model, when it has one.
  std::optional<std::string> vlm_response;
  std::chrono::milliseconds elapsed{0};
  json raw = json::object();

  /// Text items joined by newlines.
  std::string text() const;
  std::vector<std::string> paths() const;

  static ToolResult error(std::string message);
  /// Builds a result from the wire payload {"content":[...],"isError":bool}. Payloads without
  /// "content" are read in the flat dataset shape {"result_image_path", "boxes": [lines], "text"}.
  static ToolResult from_payload(const json& payload);
  json to_payload() const;
};

enum class EvidenceSource {
  tool,            ///< tool output only
  server_vision,   ///< tool output carrying the server's own vlm_response
  gateway_vision,  ///< tool output described by the Vision backend on the host
  host_feedback,   ///< error feedback produced by the host (codec errors, duplicate calls, routing)
};

std::string_view to_string(EvidenceSource source);
EvidenceSource evidence_source_from_string(std::string_view name);

/// e_t: what a round contributes back to the reasoning context.
struct Evidence {
  std::string text;
  std::vector<std::string> file_paths;
  bool is_error = false;
  EvidenceSource source = EvidenceSource::tool;
  /// JSON text stored verbatim in tool messages of a trajectory record.
  std::string payload;

  friend bool operator==(const Evidence&, const Evidence&) = default;
};

void to_json(json& j, const ToolDescriptor& d);
void from_json(const json& j, ToolDescriptor& d);
void to_json(json& j, const ToolCall& c);
void from_json(const json& j, ToolCall& c);
void to_json(json& j, const Evidence& e);
void from_json(const json& j, Evidence& e);

}  // namespace vicot
