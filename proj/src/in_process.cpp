// SPDX-License-Identifier: Apache-2.0
#include "vicot/in_process.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "vicot/rs_toolset.hpp"
#include "vicot/toolcall_codec.hpp"

namespace vicot {
namespace {

std::string hash8(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 8);
}

std::string missing_file(const std::filesystem::path& p) {
  return "Error: [Errno 2] No such file or directory: '" + p.string() + "'";
}

std::filesystem::path output_path(const std::filesystem::path& image, const std::string& tool, const json& args) {
  auto name = image.stem().string() + "_" + tool + "_" + hash8(tool + args.dump()) + ".png";
  return image.parent_path() / name;
}

ToolResult ok(std::vector<ContentItem> items) {
  ToolResult r;
  r.content = std::move(items);
  r.raw = r.to_payload();
  return r;
}

/// Region tools: validates path and box, returns the named output.
ToolResult region_tool(const std::string& tool, const json& args) {
  const std::filesystem::path image = args.value("image_path", std::string{});
  if (!std::filesystem::exists(image)) return ToolResult::error(missing_file(image));
  ImageSize size;
  try {
    size = read_png_size(image);
  } catch (const Error& e) {
    return ToolResult::error(std::string("Error: ") + e.what());
  }
  const int x1 = args.value("x1", 0), y1 = args.value("y1", 0), x2 = args.value("x2", 0), y2 = args.value("y2", 0);
  std::ostringstream box;
  box << "(" << x1 << ", " << y1 << ", " << x2 << ", " << y2 << ")";
  if (x1 < 0 || y1 < 0 || x1 >= x2 || y1 >= y2) return ToolResult::error("Error: invalid region " + box.str());
  if (x2 > size.width || y2 > size.height) {
    return ToolResult::error("Error: invalid region " + box.str() + " exceeds image bounds " +
                             std::to_string(size.width) + "x" + std::to_string(size.height));
  }
  const auto out = output_path(image, tool, args);
  return ok({{ContentItem::Kind::path, out.string()},
             {ContentItem::Kind::text, tool + " produced " + std::to_string(x2 - x1) + "x" +
                                           std::to_string(y2 - y1) + " region " + box.str()}});
}

}  // namespace

void InProcessServer::add_tool(ToolDescriptor descriptor, Handler handler) {
  std::lock_guard lock(mutex_);
  descriptor.server_name = name_;
  handlers_[descriptor.tool_name] = std::move(handler);
  tools_.push_back(std::move(descriptor));
}

std::vector<ToolDescriptor> InProcessServer::list_tools() {
  std::lock_guard lock(mutex_);
  return tools_;
}

ToolResult InProcessServer::call_tool(const ToolCall& call, std::chrono::milliseconds) {
  if (call.server_name != name_) {
    throw Error(ErrorCode::WrongServer, "call for '" + call.server_name + "' sent to server '" + name_ + "'");
  }
  std::lock_guard lock(mutex_);
  received_.push_back(call);
  auto it = handlers_.find(call.tool_name);
  if (it == handlers_.end()) return ToolResult::error("Error: unknown tool '" + call.tool_name + "'");
  const auto start = std::chrono::steady_clock::now();
  ToolResult result = it->second(call.arguments);
  result.elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
  return result;
}

std::vector<ToolCall> InProcessServer::received() const {
  std::lock_guard lock(mutex_);
  return received_;
}

ScriptedToolServer::ScriptedToolServer(std::string name, std::vector<ToolDescriptor> tools)
    : name_(std::move(name)), tools_(std::move(tools)) {
  for (auto& t : tools_) t.server_name = name_;
}

void ScriptedToolServer::enqueue(json payload) {
  std::lock_guard lock(mutex_);
  results_.push_back(std::move(payload));
}

std::vector<ToolDescriptor> ScriptedToolServer::list_tools() {
  std::lock_guard lock(mutex_);
  return tools_;
}

ToolResult ScriptedToolServer::call_tool(const ToolCall& call, std::chrono::milliseconds) {
  if (call.server_name != name_) {
    throw Error(ErrorCode::WrongServer, "call for '" + call.server_name + "' sent to server '" + name_ + "'");
  }
  std::lock_guard lock(mutex_);
  received_.push_back(call);
  if (results_.empty()) return ToolResult::error("Error: no scripted result left for '" + call.tool_name + "'");
  json payload = std::move(results_.front());
  results_.pop_front();
  return ToolResult::from_payload(payload);
}

std::vector<ToolCall> ScriptedToolServer::received() const {
  std::lock_guard lock(mutex_);
  return received_;
}

std::size_t ScriptedToolServer::remaining() const {
  std::lock_guard lock(mutex_);
  return results_.size();
}

ImageSize read_png_size(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "[Errno 2] No such file or directory: '" + path.string() + "'");
  std::array<unsigned char, 24> header{};
  in.read(reinterpret_cast<char*>(header.data()), header.size());
  static constexpr std::array<unsigned char, 8> kSignature = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (in.gcount() != static_cast<std::streamsize>(header.size()) ||
      !std::equal(kSignature.begin(), kSignature.end(), header.begin())) {
    throw Error(ErrorCode::Io, "not a PNG image: '" + path.string() + "'");
  }
  auto be32 = [&](std::size_t at) {
    return static_cast<int>((std::uint32_t{header[at]} << 24) | (std::uint32_t{header[at + 1]} << 16) |
                            (std::uint32_t{header[at + 2]} << 8) | std::uint32_t{header[at + 3]});
  };
  return {be32(16), be32(20)};
}

std::string Detection::to_line() const {
  std::ostringstream out;
  out << label << ' ' << confidence << ' ' << x1 << ' ' << y1 << ' ' << x2 << ' ' << y2;
  return out.str();
}

std::optional<Detection> parse_detection_line(std::string_view line) {
  std::istringstream in{std::string(line)};
  std::vector<std::string> fields;
  for (std::string f; in >> f;) fields.push_back(f);
  if (fields.size() < 6) return std::nullopt;
  Detection d;
  try {
    const std::size_t n = fields.size();
    std::size_t used = 0;
    d.confidence = std::stod(fields[n - 5], &used);
    if (used != fields[n - 5].size()) return std::nullopt;
    int* coords[] = {&d.x1, &d.y1, &d.x2, &d.y2};
    for (std::size_t i = 0; i < 4; ++i) {
      *coords[i] = std::stoi(fields[n - 4 + i], &used);
      if (used != fields[n - 4 + i].size()) return std::nullopt;
    }
    for (std::size_t i = 0; i + 5 < n; ++i) d.label += (i ? " " : "") + fields[i];
  } catch (const std::exception&) {
    return std::nullopt;
  }
  return d;
}

std::vector<Detection> parse_detection_lines(std::string_view text) {
  std::vector<Detection> out;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    if (auto d = parse_detection_line(line)) out.push_back(std::move(*d));
  }
  return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& image) {
  return image.parent_path() / (image.stem().string() + ".boxes.txt");
}

std::vector<Detection> filter_detections(std::span<const Detection> detections, std::string_view prompt) {
  const auto prompt_words = word_set(prompt);
  std::vector<Detection> out;
  for (const auto& d : detections) {
    const auto label_words = word_set(d.label);
    const bool hit = std::any_of(label_words.begin(), label_words.end(),
                                 [&](const std::string& w) { return prompt_words.count(w) > 0; });
    if (hit) out.push_back(d);
  }
  return out;
}

void register_desk_tools(InProcessServer& server) {
  for (auto& descriptor : rs_tool_descriptors(server.server_name())) {
    const std::string name = descriptor.tool_name;
    if (name == "image_detection") {
      server.add_tool(descriptor, [](const json& args) {
        const std::filesystem::path image = args.value("image_path", std::string{});
        if (!std::filesystem::exists(image)) return ToolResult::error(missing_file(image));
        const auto sidecar = sidecar_path(image);
        std::ifstream in(sidecar);
        if (!in) return ToolResult::error(missing_file(sidecar));
        std::stringstream content;
        content << in.rdbuf();
        const auto all = parse_detection_lines(content.str());
        auto kept = filter_detections(all, args.value("txt_prompt", std::string{}));
        if (args.contains("x1") && args.contains("y1") && args.contains("x2") && args.contains("y2")) {
          const int x1 = args["x1"], y1 = args["y1"], x2 = args["x2"], y2 = args["y2"];
          std::erase_if(kept, [&](const Detection& d) {
            // centre test in doubled coordinates keeps the arithmetic exact
            const int cx = d.x1 + d.x2, cy = d.y1 + d.y2;
            return !(cx >= 2 * x1 && cx < 2 * x2 && cy >= 2 * y1 && cy < 2 * y2);
          });
        }
        std::string text = "boxes:";
        for (const auto& d : kept) text += "\n" + d.to_line();
        return ok({{ContentItem::Kind::path, output_path(image, "image_detection", args).string()},
                   {ContentItem::Kind::text, text}});
      });
    } else if (name == "image_crop" || name == "image_binary") {
      server.add_tool(descriptor, [name](const json& args) { return region_tool(name, args); });
    } else if (name == "image_super_resolution") {
      server.add_tool(descriptor, [](const json& args) {
        const std::filesystem::path image = args.value("image_path", std::string{});
        if (!std::filesystem::exists(image)) return ToolResult::error(missing_file(image));
        ImageSize size;
        try {
          size = read_png_size(image);
        } catch (const Error& e) {
          return ToolResult::error(std::string("Error: ") + e.what());
        }
        return ok({{ContentItem::Kind::path, output_path(image, "image_super_resolution", args).string()},
                   {ContentItem::Kind::text, "super-resolved 4x: " + std::to_string(size.width) + "x" +
                                                 std::to_string(size.height) + " -> " +
                                                 std::to_string(4 * size.width) + "x" +
                                                 std::to_string(4 * size.height)}});
      });
    }
  }
}

}  // namespace vicot
