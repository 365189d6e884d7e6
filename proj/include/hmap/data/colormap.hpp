#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "hmap/tensor/array.hpp"

namespace hmap {

/// RGB image [3, H, W] with values in [0, 1].
using Image = Array<float>;

inline constexpr double kMaxHeightUm = 500.0;
inline constexpr int kLutSize = 256;

/// Macular heights in micrometers, [H, W], every value in [0, 500].
struct HeightField {
  Array<double> heights;

  Index height() const { return heights.dim(0); }
  Index width() const { return heights.dim(1); }
};

struct Rgb8 {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb8&, const Rgb8&) = default;
};

using Lut = std::array<Rgb8, kLutSize>;

/// Piecewise-linear blue -> cyan -> green -> yellow -> red, 256 entries.
const Lut& height_lut();

/// Canonical text serialization of a LUT (see docs/lut_format.md).
std::string format_lut(const Lut& lut);
Lut parse_lut(std::string_view text);

/// round-half-up(255 * h / 500); throws DataError outside [0, 500].
int height_to_lut_index(double height_um);
double lut_index_to_height(int index);

Image encode_height(const HeightField& field);

/// Nearest LUT entry by squared RGB distance, ties toward the lower index.
/// Accepts arbitrary RGB values.
HeightField decode_height(const Image& image);

}  // namespace hmap
