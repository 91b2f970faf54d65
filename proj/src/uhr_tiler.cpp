// SPDX-License-Identifier: Apache-2.0
#include "vicot/uhr_tiler.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace vicot {

bool PixelBox::holds_centre_of(const Detection& d) const {
  // doubled coordinates keep the centre test in integers
  const long long cx = static_cast<long long>(d.x1) + d.x2;
  const long long cy = static_cast<long long>(d.y1) + d.y2;
  return cx >= 2LL * x1 && cx < 2LL * x2 && cy >= 2LL * y1 && cy < 2LL * y2;
}

std::string region_tag(std::size_t row, std::size_t col) {
  return "Region [" + std::to_string(row) + "," + std::to_string(col) + "]";
}

TileGrid tile(ImageSize dims, int tile_size) {
  if (dims.width < 1 || dims.height < 1 || tile_size < 1) {
    throw Error(ErrorCode::BadDims, "cannot tile " + std::to_string(dims.width) + "x" + std::to_string(dims.height) +
                                        " with tile size " + std::to_string(tile_size));
  }
  TileGrid grid;
  grid.image_dims = dims;
  grid.tile_size = tile_size;
  grid.rows = static_cast<std::size_t>((dims.height + tile_size - 1) / tile_size);
  grid.cols = static_cast<std::size_t>((dims.width + tile_size - 1) / tile_size);
  grid.tiles.reserve(grid.rows * grid.cols);
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      const int x1 = static_cast<int>(c) * tile_size;
      const int y1 = static_cast<int>(r) * tile_size;
      grid.tiles.push_back({r, c, {x1, y1, std::min(x1 + tile_size, dims.width), std::min(y1 + tile_size, dims.height)}});
    }
  }
  return grid;
}

TileDetector make_tool_detector(const ToolRouter& router, std::string server, std::string tool, std::string image_path,
                                std::chrono::milliseconds timeout) {
  return [&router, server = std::move(server), tool = std::move(tool), image_path = std::move(image_path),
          timeout](const Tile& t, const std::string& prompt) {
    ToolCall call{server, tool,
                  json{{"image_path", image_path}, {"txt_prompt", prompt}, {"x1", t.box.x1}, {"y1", t.box.y1},
                       {"x2", t.box.x2}, {"y2", t.box.y2}},
                  {}};
    return router.call(call, timeout);
  };
}

std::string detection_prompt(std::string_view instruction) {
  static const std::set<std::string> kStopWords = {
      "a",    "an",    "and",  "any",  "are",  "as",   "at",  "by",    "find", "for",  "from", "identify", "in",
      "is",   "it",    "its",  "list", "locate", "of", "on",  "or",    "please", "show", "that", "the",  "their",
      "there", "these", "this", "to",  "what", "where", "which", "with", "all", "image", "count", "describe"};
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (!current.empty() && !kStopWords.count(current) &&
        std::find(words.begin(), words.end(), current) == words.end()) {
      words.push_back(current);
    }
    current.clear();
  };
  for (unsigned char c : instruction) {
    if (std::isalnum(c)) {
      current += static_cast<char>(std::tolower(c));
    } else {
      flush();
    }
  }
  flush();
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) out += (i ? " . " : "") + words[i];
  return out;
}

FilterResult filter_tiles(const TileGrid& grid, const TileDetector& detector, std::string_view instruction) {
  const std::string prompt = detection_prompt(instruction);
  FilterResult result;
  for (const auto& t : grid.tiles) {
    TileDetections entry{t, {}, false, {}};
    const ToolResult r = detector(t, prompt);
    if (r.is_error) {
      entry.is_error = true;
      entry.error_text = r.text();
      result.discarded.push_back(std::move(entry));
      continue;
    }
    for (auto& d : parse_detection_lines(r.text())) {
      if (t.box.holds_centre_of(d)) entry.detections.push_back(std::move(d));
    }
    (entry.detections.empty() ? result.discarded : result.kept).push_back(std::move(entry));
  }
  return result;
}

RegionSummary summarize_region(const TileDetections& tile, const std::string& tile_image, const std::string& query,
                               const ToolRouter& router, const Backends& backends, const RunConfig& config) {
  RegionSummary out;
  out.row = tile.tile.row;
  out.col = tile.tile.col;
  out.tag = region_tag(out.row, out.col);
  out.detections = tile.detections;
  out.kept = !tile.detections.empty();
  const auto& b = tile.tile.box;
  const std::string narrowed = query + "\nFocus on " + out.tag + ", pixel box (" + std::to_string(b.x1) + ", " +
                               std::to_string(b.y1) + ", " + std::to_string(b.x2) + ", " + std::to_string(b.y2) + ").";
  try {
    const RunReport report = run(tile_image, narrowed, router, backends, config);
    if (report.outcome == Outcome::completed && report.final) {
      const auto& f = *report.final;
      out.summary = f.kind == StructuredKind::soap ? f.section('O') + "\n" + f.section('A') : f.answer;
    } else {
      out.flagged = true;
      out.summary = "analysis incomplete (" + std::string(to_string(report.outcome)) + ")";
      if (!report.note.empty()) out.summary += ": " + report.note;
    }
  } catch (const Error& e) {
    out.flagged = true;
    out.summary = std::string("analysis failed: ") + e.what();
  }
  return out;
}

PromptBundle aggregate(std::span<const RegionSummary> summaries, const std::string& query, const Templates& templates,
                       const std::string& global_caption) {
  std::vector<const RegionSummary*> kept;
  std::set<std::string> tags;
  for (const auto& s : summaries) {
    if (!tags.insert(s.tag).second) throw Error(ErrorCode::DuplicateTag, "duplicate region tag '" + s.tag + "'");
    if (s.kept) kept.push_back(&s);
  }
  std::sort(kept.begin(), kept.end(), [](const RegionSummary* a, const RegionSummary* b) {
    return std::tie(a->row, a->col) < std::tie(b->row, b->col);
  });
  std::string narrative;
  for (const auto* s : kept) {
    if (!narrative.empty()) narrative += "\n\n";
    narrative += s->tag + ":" + (s->flagged ? " (flagged)" : "") + "\n" + s->summary;
  }
  if (kept.empty()) {
    narrative = std::string(kNoRegionsFallback);
    if (!global_caption.empty()) narrative += "\nGlobal description: " + global_caption;
  }
  PromptBundle bundle;
  bundle.turns.push_back({Role::system, fill(templates.integration, {{"regional_narrative", narrative}, {"user_query", query}})});
  bundle.turns.push_back({Role::user, query});
  return bundle;
}

}  // namespace vicot
