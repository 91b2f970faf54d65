// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vicot/transport.hpp"

namespace vicot {

/// Tool server living inside the host process. Calls are serialized like a single-threaded server.
class InProcessServer : public ToolEndpoint {
 public:
  using Handler = std::function<ToolResult(const json& arguments)>;

  explicit InProcessServer(std::string name) : name_(std::move(name)) {}

  void add_tool(ToolDescriptor descriptor, Handler handler);

  const std::string& server_name() const override { return name_; }
  std::vector<ToolDescriptor> list_tools() override;
  ToolResult call_tool(const ToolCall& call, std::chrono::milliseconds timeout) override;

  std::vector<ToolCall> received() const;

 private:
  std::string name_;
  mutable std::mutex mutex_;
  std::vector<ToolDescriptor> tools_;
  std::map<std::string, Handler> handlers_;
  std::vector<ToolCall> received_;
};

/// Returns recorded result payloads in call order, whatever tool is named. Used for golden
/// walkthroughs and trace replay.
class ScriptedToolServer : public ToolEndpoint {
 public:
  ScriptedToolServer(std::string name, std::vector<ToolDescriptor> tools = {});

  void enqueue(json payload);

  const std::string& server_name() const override { return name_; }
  std::vector<ToolDescriptor> list_tools() override;
  ToolResult call_tool(const ToolCall& call, std::chrono::milliseconds timeout) override;

  std::vector<ToolCall> received() const;
  std::size_t remaining() const;

 private:
  std::string name_;
  std::vector<ToolDescriptor> tools_;
  mutable std::mutex mutex_;
  std::deque<json> results_;
  std::vector<ToolCall> received_;
};

struct ImageSize {
  int width = 0;
  int height = 0;
};

/// Width and height from a PNG header. Throws Io when the file is missing or not a PNG.
ImageSize read_png_size(const std::filesystem::path& path);

/// "label conf x1 y1 x2 y2" lines; the last five fields are numbers, the rest is the label.
struct Detection {
  std::string label;
  double confidence = 0.0;
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  std::string to_line() const;
  friend bool operator==(const Detection&, const Detection&) = default;
};

std::optional<Detection> parse_detection_line(std::string_view line);
std::vector<Detection> parse_detection_lines(std::string_view text);

/// Sidecar annotation file for an image: same directory and stem, ".boxes.txt" suffix.
std::filesystem::path sidecar_path(const std::filesystem::path& image);

/// Labels whose words intersect the prompt words (prompt categories may be separated by " . ").
std::vector<Detection> filter_detections(std::span<const Detection> detections, std::string_view prompt);

/// Registers contract doubles of the vision tools on `server`: image_detection answers from the
/// sidecar annotations (optionally limited to boxes centred in x1..y2), while image_crop,
/// image_binary and image_super_resolution validate inputs against the PNG header and name a
/// content-hashed output path without producing pixels. Failures mirror the reference server's
/// error text ("No such file or directory", "invalid region").
void register_desk_tools(InProcessServer& server);

}  // namespace vicot
