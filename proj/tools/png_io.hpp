#pragma once

#include <filesystem>

#include "omt/image.hpp"

namespace omt::io {

// 8-bit PNG. Gray, palette and 16-bit inputs are converted to RGB(A).
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);

// Binary PPM (P6), for tools that do not want PNG.
Image read_ppm(const std::filesystem::path& path);

// Picks the decoder from the extension.
Image read_image(const std::filesystem::path& path);

}  // namespace omt::io
