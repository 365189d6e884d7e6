#pragma once

#include <filesystem>

#include "hmap/data/colormap.hpp"

namespace hmap {

/// 8-bit PNG. Grayscale images load as [1, H, W], RGB as [3, H, W], RGBA as
/// [4, H, W]; values are scaled to [0, 1].
Image read_png(const std::filesystem::path& path);

/// Writes [C, H, W] with C in {1, 3}; values are clamped to [0, 1] and
/// rounded to 8 bits.
void write_png(const std::filesystem::path& path, const Image& image);

/// Quantizes to 8 bits the same way write_png does.
Image quantize8(const Image& image);

}  // namespace hmap
