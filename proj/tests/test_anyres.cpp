#include <gtest/gtest.h>

#include <algorithm>
#include <tuple>
#include <vector>

#include "omt/anyres.hpp"
#include "omt/rng.hpp"
#include "oracles.hpp"

using namespace omt;
using namespace omt::anyres;

namespace {

TilerConfig cfg_336() { return TilerConfig{}; }

}  // namespace

TEST(SelectGrid, KnownExamples) {
  EXPECT_EQ(select_grid(336, 336, cfg_336()), (GridChoice{1, 1}));
  EXPECT_EQ(select_grid(672, 672, cfg_336()), (GridChoice{2, 2}));
  EXPECT_EQ(select_grid(1008, 336, cfg_336()), (GridChoice{1, 3}));
  EXPECT_EQ(select_grid(672, 1008, cfg_336()), (GridChoice{3, 2}));
}

TEST(SelectGrid, ExamplesAgreeWithBruteForce) {
  for (auto [w, h] : std::vector<std::pair<int, int>>{{336, 336}, {672, 672}, {1008, 336}, {672, 1008}}) {
    EXPECT_EQ(select_grid(w, h, cfg_336()), oracle::brute_force_grid(w, h, cfg_336()));
  }
}

TEST(SelectGrid, RejectsInvalidDimensions) {
  EXPECT_THROW(select_grid(0, 10, cfg_336()), InputError);
  EXPECT_THROW(select_grid(10, -1, cfg_336()), InputError);
  TilerConfig bad;
  bad.max_tiles = 0;
  EXPECT_THROW(select_grid(10, 10, bad), ConfigError);
}

TEST(SelectGrid, MatchesBruteForceOnRandomSizes) {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    TilerConfig cfg;
    cfg.base_tile_px = static_cast<int>(rng.uniform_int(8, 400));
    cfg.max_tiles = static_cast<int>(rng.uniform_int(1, 12));
    const int w = static_cast<int>(rng.uniform_int(1, 4096)), h = static_cast<int>(rng.uniform_int(1, 4096));
    ASSERT_EQ(select_grid(w, h, cfg), oracle::brute_force_grid(w, h, cfg)) << w << "x" << h;
  }
}

TEST(SelectGrid, MonotoneInAreaForFixedAspect) {
  for (auto [aw, ah] : std::vector<std::pair<int, int>>{{1, 1}, {3, 1}, {1, 3}, {4, 3}, {16, 9}, {2, 5}, {7, 2}}) {
    int prev = 0;
    for (int k = 1; k * std::max(aw, ah) <= 4096; ++k) {
      const int cells = select_grid(aw * k, ah * k, cfg_336()).cells();
      ASSERT_GE(cells, prev) << aw << ":" << ah << " scale " << k;
      prev = cells;
    }
  }
}

TEST(LayoutImage, TokenAccounting) {
  const auto l = layout_image(672, 672, cfg_336());
  EXPECT_TRUE(l.has_thumbnail);
  EXPECT_EQ(l.total_image_units, 5);
  EXPECT_EQ(l.total_tokens, 2880);

  const auto one = layout_image(336, 336, cfg_336());
  EXPECT_FALSE(one.has_thumbnail);
  EXPECT_EQ(one.total_image_units, 1);
  EXPECT_EQ(one.total_tokens, 576);

  const auto tall = layout_image(672, 1008, cfg_336());
  EXPECT_EQ(tall.grid, (GridChoice{3, 2}));
  EXPECT_EQ(tall.total_image_units, 7);
  EXPECT_EQ(tall.total_tokens, 4032);

  TilerConfig no_thumb;
  no_thumb.thumbnail_enabled = false;
  EXPECT_EQ(layout_image(672, 672, no_thumb).total_tokens, 4 * 576);
}

TEST(LayoutImage, RectsPartitionCanvas) {
  Rng rng(3);
  for (int i = 0; i < 300; ++i) {
    TilerConfig cfg;
    cfg.base_tile_px = static_cast<int>(rng.uniform_int(1, 12));
    cfg.max_tiles = static_cast<int>(rng.uniform_int(1, 9));
    const auto l = layout_image(static_cast<int>(rng.uniform_int(1, 80)), static_cast<int>(rng.uniform_int(1, 80)), cfg);
    ASSERT_TRUE(oracle::rects_partition(l.tile_rects, l.canvas_size.width, l.canvas_size.height));
    EXPECT_EQ(l.total_tokens, l.total_image_units * cfg.tokens_per_tile);
    EXPECT_EQ(l.total_image_units, l.grid.cells() + (l.has_thumbnail ? 1 : 0));
  }
}

TEST(LayoutImage, Deterministic) {
  const auto a = layout_image(1234, 777, cfg_336());
  const auto b = layout_image(1234, 777, cfg_336());
  EXPECT_EQ(a.grid, b.grid);
  EXPECT_EQ(a.tile_rects, b.tile_rects);
  EXPECT_EQ(a.scaled_size, b.scaled_size);
}

TEST(LayoutImage, VideoFrameDefaultsToSingleTile) {
  const auto l = layout_image(1920, 1080, TilerConfig::video_frame());
  EXPECT_EQ(l.grid, (GridChoice{1, 1}));
  EXPECT_EQ(l.total_tokens, 576);
}

namespace {

Image noise(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  Image img(w, h, 3);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return img;
}

}  // namespace

TEST(SlicePixels, ExactDivision) {
  const Image img = noise(672, 672, 1);
  const auto tiled = tile_image(img, cfg_336());
  ASSERT_EQ(tiled.tiles.size(), 5u);
  for (const auto& t : tiled.tiles) {
    EXPECT_EQ(t.width, 336);
    EXPECT_EQ(t.height, 336);
  }
  // Image already matches the canvas, so tiles are plain crops.
  EXPECT_EQ(tiled.tiles[3], crop(img, {336, 336, 336, 336}));
}

TEST(SlicePixels, SingleTileIsResizedImage) {
  const Image img = noise(336, 336, 2);
  const auto tiled = tile_image(img, cfg_336());
  ASSERT_EQ(tiled.tiles.size(), 1u);
  EXPECT_EQ(tiled.tiles[0], img);
}

TEST(SlicePixels, RoundTripOnPaddedCanvas) {
  TilerConfig cfg;
  cfg.base_tile_px = 16;
  const auto layout = layout_image(32, 40, cfg);  // 3x2 grid, padded vertically
  ASSERT_EQ(layout.grid, (GridChoice{3, 2}));
  const Image canvas = render_canvas(noise(32, 40, 5), layout);
  const auto tiles = slice_pixels(canvas, layout);
  ASSERT_EQ(tiles.size(), 7u);
  EXPECT_EQ(reassemble(tiles, layout), canvas);
}

TEST(SlicePixels, RoundTripProperty) {
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    TilerConfig cfg;
    cfg.base_tile_px = static_cast<int>(rng.uniform_int(2, 24));
    cfg.max_tiles = static_cast<int>(rng.uniform_int(1, 6));
    const int w = static_cast<int>(rng.uniform_int(1, 100)), h = static_cast<int>(rng.uniform_int(1, 100));
    const auto layout = layout_image(w, h, cfg);
    const Image canvas = render_canvas(noise(w, h, rng.next()), layout);
    const auto tiles = slice_pixels(canvas, layout);
    for (const auto& t : tiles) ASSERT_EQ(t.width, cfg.base_tile_px);
    ASSERT_EQ(reassemble(tiles, layout), canvas);
  }
}

TEST(SlicePixels, RejectsWrongCanvas) {
  const auto layout = layout_image(672, 672, cfg_336());
  EXPECT_THROW(slice_pixels(noise(600, 672, 1), layout), InputError);
}

TEST(RenderCanvas, PadsWithMidGray) {
  TilerConfig cfg;
  cfg.base_tile_px = 10;
  cfg.max_tiles = 1;
  const auto layout = layout_image(10, 4, cfg);
  EXPECT_EQ(layout.scaled_size, (Size{10, 4}));
  const Image canvas = render_canvas(filled(10, 4, {0, 0, 0}), layout);
  EXPECT_EQ(canvas.at(0, 0)[0], 128);
  EXPECT_EQ(canvas.at(0, 9)[2], 128);
  EXPECT_EQ(canvas.at(5, 5)[1], 0);
}
