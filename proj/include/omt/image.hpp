#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "omt/error.hpp"

namespace omt {

struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool operator==(const Rect&) const = default;
};

using Rgb = std::array<std::uint8_t, 3>;

// Interleaved 8-bit raster, row-major. channels is 3 (RGB) or 4 (RGBA).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c = 3, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        pixels(static_cast<std::size_t>(w) * h * c, fill) {
    detail::require_input(w > 0 && h > 0, "image dimensions must be positive");
    detail::require_input(c == 3 || c == 4, "image must have 3 or 4 channels");
  }

  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * width + x) * channels;
  }
  std::uint8_t* at(int x, int y) { return pixels.data() + offset(x, y); }
  const std::uint8_t* at(int x, int y) const { return pixels.data() + offset(x, y); }

  bool operator==(const Image&) const = default;
};

inline Image filled(int w, int h, Rgb color) {
  Image img(w, h, 3);
  for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
    img.pixels[i] = color[0];
    img.pixels[i + 1] = color[1];
    img.pixels[i + 2] = color[2];
  }
  return img;
}

// Bilinear resize with half-pixel centers. Same-size resize is an exact copy.
inline Image resize_bilinear(const Image& src, int w, int h) {
  detail::require_input(w > 0 && h > 0, "resize target must be positive");
  if (w == src.width && h == src.height) return src;
  Image dst(w, h, src.channels);
  const double sx = static_cast<double>(src.width) / w;
  const double sy = static_cast<double>(src.height) / h;
  for (int y = 0; y < h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < src.channels; ++c) {
        const double top = src.at(x0, y0)[c] * (1 - wx) + src.at(x1, y0)[c] * wx;
        const double bot = src.at(x0, y1)[c] * (1 - wx) + src.at(x1, y1)[c] * wx;
        dst.at(x, y)[c] = static_cast<std::uint8_t>(std::lround(top * (1 - wy) + bot * wy));
      }
    }
  }
  return dst;
}

inline Image crop(const Image& src, Rect r) {
  detail::require_input(r.x >= 0 && r.y >= 0 && r.w > 0 && r.h > 0 && r.x + r.w <= src.width &&
                            r.y + r.h <= src.height,
                        "crop rectangle outside image");
  Image dst(r.w, r.h, src.channels);
  const std::size_t row_bytes = static_cast<std::size_t>(r.w) * src.channels;
  for (int y = 0; y < r.h; ++y) {
    std::copy_n(src.at(r.x, r.y + y), row_bytes, dst.at(0, y));
  }
  return dst;
}

// Copies src into dst with its top-left corner at (x, y). Channel counts must match.
inline void blit(Image& dst, const Image& src, int x, int y) {
  detail::require_input(src.channels == dst.channels, "blit channel mismatch");
  detail::require_input(x >= 0 && y >= 0 && x + src.width <= dst.width && y + src.height <= dst.height,
                        "blit outside destination");
  const std::size_t row_bytes = static_cast<std::size_t>(src.width) * src.channels;
  for (int row = 0; row < src.height; ++row) {
    std::copy_n(src.at(0, row), row_bytes, dst.at(x, y + row));
  }
}

// Source-over blend of an RGBA overlay onto an RGB frame.
inline void alpha_blend(Image& frame, const Image& overlay, int x, int y) {
  detail::require_input(frame.channels == 3 && overlay.channels == 4, "alpha_blend expects RGB frame, RGBA overlay");
  detail::require_input(x >= 0 && y >= 0 && x + overlay.width <= frame.width &&
                            y + overlay.height <= frame.height,
                        "overlay outside frame");
  for (int oy = 0; oy < overlay.height; ++oy) {
    for (int ox = 0; ox < overlay.width; ++ox) {
      const std::uint8_t* s = overlay.at(ox, oy);
      std::uint8_t* d = frame.at(x + ox, y + oy);
      const int a = s[3];
      for (int c = 0; c < 3; ++c) {
        d[c] = static_cast<std::uint8_t>((s[c] * a + d[c] * (255 - a) + 127) / 255);
      }
    }
  }
}

}  // namespace omt
