// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vicot/agent_loop.hpp"
#include "vicot/in_process.hpp"

namespace vicot {

inline constexpr int kDefaultTileSize = 512;

/// Half-open pixel rectangle [x1, x2) x [y1, y2).
struct PixelBox {
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  long long area() const { return static_cast<long long>(x2 - x1) * (y2 - y1); }
  /// True when the centre of `d` falls inside this box.
  bool holds_centre_of(const Detection& d) const;

  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

struct Tile {
  std::size_t row = 0;
  std::size_t col = 0;
  PixelBox box;

  friend bool operator==(const Tile&, const Tile&) = default;
};

/// "Region [r,c]" with 0-based row and column.
std::string region_tag(std::size_t row, std::size_t col);

struct TileGrid {
  ImageSize image_dims;
  int tile_size = kDefaultTileSize;
  std::size_t rows = 0;
  std::size_t cols = 0;
  /// Row-major.
  std::vector<Tile> tiles;

  const Tile& at(std::size_t row, std::size_t col) const { return tiles.at(row * cols + col); }
};

/// Square tiles of `tile_size` pixels; the last row and column may be smaller. Throws BadDims.
TileGrid tile(ImageSize dims, int tile_size = kDefaultTileSize);

/// Detection call for one tile.
using TileDetector = std::function<ToolResult(const Tile& tile, const std::string& prompt)>;

/// Calls `tool` on `server` with the whole image, the prompt and the tile box as x1..y2.
TileDetector make_tool_detector(const ToolRouter& router, std::string server, std::string tool, std::string image_path,
                                std::chrono::milliseconds timeout = std::chrono::seconds(60));

/// Detector prompt for an instruction: its content words, in order, separated by " . ".
std::string detection_prompt(std::string_view instruction);

struct TileDetections {
  Tile tile;
  /// Detections whose centre lies in the tile.
  std::vector<Detection> detections;
  bool is_error = false;
  std::string error_text;
};

struct FilterResult {
  /// Tiles with at least one detection, row-major.
  std::vector<TileDetections> kept;
  /// Empty tiles and tiles whose detection call failed.
  std::vector<TileDetections> discarded;
};

FilterResult filter_tiles(const TileGrid& grid, const TileDetector& detector, std::string_view instruction);

struct RegionSummary {
  std::string tag;
  std::size_t row = 0;
  std::size_t col = 0;
  std::vector<Detection> detections;
  std::string summary;
  bool kept = false;
  /// The tile's run did not complete; `summary` says why.
  bool flagged = false;
};

/// Runs the reasoning loop on `tile_image` with the instruction narrowed to the tile.
/// The summary is the O and A sections of a SOAP answer, or the free-text answer.
RegionSummary summarize_region(const TileDetections& tile, const std::string& tile_image, const std::string& query,
                               const ToolRouter& router, const Backends& backends, const RunConfig& config);

inline constexpr std::string_view kNoRegionsFallback = "No salient regions detected.";

/// Integration prompt over the kept summaries in row-major order. With nothing kept, the
/// narrative is kNoRegionsFallback plus the global caption. Throws DuplicateTag.
PromptBundle aggregate(std::span<const RegionSummary> summaries, const std::string& query,
                       const Templates& templates = Templates::defaults(), const std::string& global_caption = {});

}  // namespace vicot
