// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vicot/agent_loop.hpp"
#include "vicot/in_process.hpp"

namespace vicot {

using ordered_json = nlohmann::ordered_json;

struct MessagePart {
  enum class Kind { text, image };
  Kind kind = Kind::text;
  std::string value;

  friend bool operator==(const MessagePart&, const MessagePart&) = default;
};

struct Message {
  Role role = Role::user;
  std::vector<MessagePart> content;

  /// Text parts joined by newlines.
  std::string text() const;
  std::vector<std::string> images() const;

  friend bool operator==(const Message&, const Message&) = default;
};

/// One trajectory: {"id": ..., "messages": [{"role": ..., "content": [{"type": "text", "text": ...} |
/// {"type": "image", "image": path}]}]}.
struct TrajectoryRecord {
  std::string id;
  std::vector<Message> messages;

  ordered_json to_json() const;
  /// Structural decoding only; use validate() for the content rules. Throws InvalidRecord.
  static TrajectoryRecord from_json(const json& j);

  friend bool operator==(const TrajectoryRecord&, const TrajectoryRecord&) = default;
};

/// User message that hands the rough caption over to tool use.
std::string tool_instruction(const std::string& image_ref);

struct RunMeta {
  std::string id;
  std::string system_text;
};

/// Message layout: system, user (query + image), assistant (rough caption), user (tool instruction),
/// then per frame the decision as assistant and its evidence as tool payload (or as user text for
/// host feedback on a turn without a call). Throws IncompleteRun unless the last frame is terminal.
TrajectoryRecord serialize_stack(const ReasoningStack& stack, const RunMeta& meta);

/// serialize_stack with the report's system text.
TrajectoryRecord serialize_run(const RunReport& report, const std::string& id);

struct Violation {
  /// Index into "messages"; absent for record-level problems.
  std::optional<std::size_t> message_index;
  std::string code;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::string to_string() const;
};

/// Checks a record given as raw JSON, so malformed shapes are reported instead of thrown.
ValidationReport validate(const json& record);
ValidationReport validate(const TrajectoryRecord& record);

struct DatasetStats {
  std::size_t n_records = 0;
  /// steps -> number of records.
  std::map<std::size_t, std::size_t> steps_per_record;
  double mean_steps = 0.0;
  std::size_t total_tokens_est = 0;
  std::map<std::string, std::size_t> tool_call_counts;
  std::size_t distinct_images = 0;

  json to_json() const;
};

/// Steps of a record: assistant messages carrying a parsable call, plus one for a terminal answer.
std::size_t count_steps(const TrajectoryRecord& record);

DatasetStats stats(std::span<const TrajectoryRecord> dataset);

/// Everything needed to re-run a recorded trajectory.
struct ReplayBundle {
  std::string image_ref;
  std::string query;
  Backends backends;
  std::shared_ptr<ScriptedBackend> think;
  std::shared_ptr<ScriptedBackend> vision;
  std::vector<std::shared_ptr<ScriptedToolServer>> servers;
  RunConfig config;

  ToolRouter router() const;
};

/// Scripted backends and tool servers reproducing the record. Tool descriptors are recovered from
/// the tool listing in the system text when present. Throws InvalidRecord for records that fail
/// validation or were not produced by a plain run.
ReplayBundle replay(const TrajectoryRecord& record);

/// A JSON array of records, or one record per line.
std::vector<json> load_dataset(const std::filesystem::path& path);
/// Writes the array form.
void write_dataset(const std::filesystem::path& path, std::span<const TrajectoryRecord> records);

}  // namespace vicot
