#pragma once

// Any-resolution tiling: pick a grid of fixed-size square tiles for an image
// of arbitrary size, lay the resized image out on the grid canvas, and slice
// it into tiles plus an optional global thumbnail.

#include <cstdint>
#include <tuple>
#include <utility>
#include <vector>

#include "omt/error.hpp"
#include "omt/image.hpp"

namespace omt::anyres {

inline constexpr Rgb kPadColor{128, 128, 128};

struct TilerConfig {
  int base_tile_px = 336;
  int max_tiles = 6;
  int tokens_per_tile = 576;  // 336 px / 14 px patches = 24 x 24
  bool thumbnail_enabled = true;

  void validate() const {
    detail::require_config(base_tile_px > 0, "base_tile_px must be positive");
    detail::require_config(max_tiles >= 1, "max_tiles must be >= 1");
    detail::require_config(tokens_per_tile > 0, "tokens_per_tile must be positive");
  }

  // Video frames are encoded as a single tile.
  static TilerConfig video_frame() {
    TilerConfig cfg;
    cfg.max_tiles = 1;
    return cfg;
  }
};

struct GridChoice {
  int rows = 1;
  int cols = 1;

  int cells() const { return rows * cols; }
  bool operator==(const GridChoice&) const = default;
};

struct Size {
  int width = 0;
  int height = 0;
  bool operator==(const Size&) const = default;
};

struct TileLayout {
  GridChoice grid;
  Size scaled_size;   // resized image, before padding
  Size canvas_size;   // cols * base x rows * base
  Rect content_rect;  // where the resized image sits on the canvas
  std::vector<Rect> tile_rects;  // row-major
  bool has_thumbnail = false;
  int base_tile_px = 0;
  int tokens_per_tile = 0;
  std::int64_t total_image_units = 0;
  std::int64_t total_tokens = 0;
};

// Aspect-preserving resize of (w, h) to fit inside (max_w, max_h), touching
// at least one edge. Integer arithmetic so results do not depend on rounding mode.
inline Size fit_within(int w, int h, int max_w, int max_h) {
  const auto W = static_cast<std::int64_t>(w), H = static_cast<std::int64_t>(h);
  const auto MW = static_cast<std::int64_t>(max_w), MH = static_cast<std::int64_t>(max_h);
  if (MW * H <= MH * W) {
    return {max_w, static_cast<int>(std::max<std::int64_t>(1, H * MW / W))};
  }
  return {static_cast<int>(std::max<std::int64_t>(1, W * MH / H)), max_h};
}

// Score of one candidate grid; larger is better under operator<.
struct GridScore {
  std::int64_t effective = 0;
  std::int64_t waste = 0;
  int cells = 0;
  int rows = 0;

  // True when this candidate ranks strictly ahead of other.
  bool better_than(const GridScore& o) const {
    return std::tuple(-effective, waste, cells, rows) < std::tuple(-o.effective, o.waste, o.cells, o.rows);
  }
};

inline GridScore score_grid(int image_w, int image_h, GridChoice g, int base) {
  const int cw = g.cols * base;
  const int ch = g.rows * base;
  const Size fit = fit_within(image_w, image_h, cw, ch);
  const std::int64_t original = static_cast<std::int64_t>(image_w) * image_h;
  const std::int64_t effective = std::min(static_cast<std::int64_t>(fit.width) * fit.height, original);
  const std::int64_t canvas = static_cast<std::int64_t>(cw) * ch;
  return {effective, canvas - effective, g.cells(), g.rows};
}

inline GridChoice select_grid(int image_w, int image_h, const TilerConfig& cfg) {
  cfg.validate();
  detail::require_input(image_w > 0 && image_h > 0, "image dimensions must be positive");
  GridChoice best{1, 1};
  GridScore best_score = score_grid(image_w, image_h, best, cfg.base_tile_px);
  for (int rows = 1; rows <= cfg.max_tiles; ++rows) {
    for (int cols = 1; rows * cols <= cfg.max_tiles; ++cols) {
      const GridChoice g{rows, cols};
      const GridScore s = score_grid(image_w, image_h, g, cfg.base_tile_px);
      if (s.better_than(best_score)) {
        best = g;
        best_score = s;
      }
    }
  }
  return best;
}

inline TileLayout layout_image(int image_w, int image_h, const TilerConfig& cfg) {
  const GridChoice grid = select_grid(image_w, image_h, cfg);
  const int base = cfg.base_tile_px;

  TileLayout layout;
  layout.grid = grid;
  layout.base_tile_px = base;
  layout.tokens_per_tile = cfg.tokens_per_tile;
  layout.canvas_size = {grid.cols * base, grid.rows * base};
  layout.scaled_size = fit_within(image_w, image_h, layout.canvas_size.width, layout.canvas_size.height);
  layout.content_rect = {(layout.canvas_size.width - layout.scaled_size.width) / 2,
                         (layout.canvas_size.height - layout.scaled_size.height) / 2,
                         layout.scaled_size.width, layout.scaled_size.height};
  layout.tile_rects.reserve(static_cast<std::size_t>(grid.cells()));
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      layout.tile_rects.push_back({c * base, r * base, base, base});
    }
  }
  layout.has_thumbnail = cfg.thumbnail_enabled && grid.cells() > 1;
  layout.total_image_units = grid.cells() + (layout.has_thumbnail ? 1 : 0);
  layout.total_tokens = layout.total_image_units * cfg.tokens_per_tile;
  return layout;
}

// Resizes the image to layout.scaled_size and centers it on a gray canvas.
inline Image render_canvas(const Image& image, const TileLayout& layout) {
  detail::require_input(image.channels == 3, "render_canvas expects an RGB image");
  Image canvas = filled(layout.canvas_size.width, layout.canvas_size.height, kPadColor);
  const Image scaled = resize_bilinear(image, layout.scaled_size.width, layout.scaled_size.height);
  blit(canvas, scaled, layout.content_rect.x, layout.content_rect.y);
  return canvas;
}

// Global view: the content region fitted into one base tile, padded gray.
inline Image make_thumbnail(const Image& canvas, const TileLayout& layout) {
  const int base = layout.base_tile_px;
  const Image content = crop(canvas, layout.content_rect);
  const Size fit = fit_within(content.width, content.height, base, base);
  Image thumb = filled(base, base, kPadColor);
  blit(thumb, resize_bilinear(content, fit.width, fit.height), (base - fit.width) / 2, (base - fit.height) / 2);
  return thumb;
}

// Slices a rendered canvas into row-major tiles, thumbnail last when present.
inline std::vector<Image> slice_pixels(const Image& canvas, const TileLayout& layout) {
  detail::require_input(canvas.width == layout.canvas_size.width && canvas.height == layout.canvas_size.height,
                        "canvas size does not match layout");
  std::vector<Image> tiles;
  tiles.reserve(layout.tile_rects.size() + 1);
  for (const Rect& r : layout.tile_rects) tiles.push_back(crop(canvas, r));
  if (layout.has_thumbnail) tiles.push_back(make_thumbnail(canvas, layout));
  return tiles;
}

// Inverse of slice_pixels for the grid tiles (thumbnail ignored).
inline Image reassemble(const std::vector<Image>& tiles, const TileLayout& layout) {
  detail::require_input(tiles.size() >= layout.tile_rects.size(), "not enough tiles to reassemble");
  Image canvas(layout.canvas_size.width, layout.canvas_size.height, tiles.front().channels);
  for (std::size_t i = 0; i < layout.tile_rects.size(); ++i) {
    blit(canvas, tiles[i], layout.tile_rects[i].x, layout.tile_rects[i].y);
  }
  return canvas;
}

struct TiledImage {
  TileLayout layout;
  std::vector<Image> tiles;
};

inline TiledImage tile_image(const Image& image, const TilerConfig& cfg) {
  TiledImage out;
  out.layout = layout_image(image.width, image.height, cfg);
  out.tiles = slice_pixels(render_canvas(image, out.layout), out.layout);
  return out;
}

}  // namespace omt::anyres
