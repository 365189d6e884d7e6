#include "hmap/data/colormap.hpp"

#include <cmath>
#include <sstream>

namespace hmap {

namespace {

struct Knot {
  int index;
  Rgb8 color;
};

constexpr std::array<Knot, 5> kKnots{{
    {0, {0, 0, 255}},
    {64, {0, 255, 255}},
    {128, {0, 255, 0}},
    {191, {255, 255, 0}},
    {255, {255, 0, 0}},
}};

Lut build_lut() {
  Lut lut{};
  for (std::size_t k = 0; k + 1 < kKnots.size(); ++k) {
    const Knot& lo = kKnots[k];
    const Knot& hi = kKnots[k + 1];
    for (int i = lo.index; i <= hi.index; ++i) {
      const double t = static_cast<double>(i - lo.index) / (hi.index - lo.index);
      auto lerp = [t](std::uint8_t a, std::uint8_t b) {
        return static_cast<std::uint8_t>(std::lround(a + t * (static_cast<double>(b) - a)));
      };
      lut[static_cast<std::size_t>(i)] = {lerp(lo.color.r, hi.color.r), lerp(lo.color.g, hi.color.g),
                                          lerp(lo.color.b, hi.color.b)};
    }
  }
  return lut;
}

constexpr const char* kLutHeader = "# hmap height colormap v1";

}  // namespace

const Lut& height_lut() {
  static const Lut lut = build_lut();
  return lut;
}

std::string format_lut(const Lut& lut) {
  std::ostringstream os;
  os << kLutHeader << '\n';
  for (const Rgb8& c : lut) os << int(c.r) << ' ' << int(c.g) << ' ' << int(c.b) << '\n';
  return os.str();
}

Lut parse_lut(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string line;
  if (!std::getline(is, line) || line != kLutHeader) throw DataError("colormap file: missing header line");
  Lut lut{};
  for (int i = 0; i < kLutSize; ++i) {
    int r = -1, g = -1, b = -1;
    if (!(is >> r >> g >> b) || r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255) {
      throw DataError("colormap file: bad entry " + std::to_string(i));
    }
    lut[static_cast<std::size_t>(i)] = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
                                        static_cast<std::uint8_t>(b)};
  }
  return lut;
}

int height_to_lut_index(double height_um) {
  if (!(height_um >= 0.0 && height_um <= kMaxHeightUm)) {
    throw DataError("height " + std::to_string(height_um) + " um outside [0, 500]");
  }
  return static_cast<int>(std::floor(255.0 * height_um / kMaxHeightUm + 0.5));
}

double lut_index_to_height(int index) { return kMaxHeightUm * index / 255.0; }

Image encode_height(const HeightField& field) {
  const Shape& s = field.heights.shape();
  if (s.size() != 2) throw ShapeError("height field must be [H, W], got " + to_string(s));
  const Index plane = s[0] * s[1];
  Image img(Shape{3, s[0], s[1]});
  const Lut& lut = height_lut();
  for (Index i = 0; i < plane; ++i) {
    const Rgb8 c = lut[static_cast<std::size_t>(height_to_lut_index(field.heights[i]))];
    img[i] = c.r / 255.0f;
    img[plane + i] = c.g / 255.0f;
    img[2 * plane + i] = c.b / 255.0f;
  }
  return img;
}

HeightField decode_height(const Image& image) {
  const Shape& s = image.shape();
  if (s.size() != 3 || s[0] != 3) throw ShapeError("heightmap image must be [3, H, W], got " + to_string(s));
  const Index plane = s[1] * s[2];
  const Lut& lut = height_lut();
  HeightField out{Array<double>(Shape{s[1], s[2]})};
  for (Index i = 0; i < plane; ++i) {
    const double r = image[i] * 255.0, g = image[plane + i] * 255.0, b = image[2 * plane + i] * 255.0;
    int best = 0;
    double best_d = INFINITY;
    for (int k = 0; k < kLutSize; ++k) {
      const Rgb8 c = lut[static_cast<std::size_t>(k)];
      const double d = (r - c.r) * (r - c.r) + (g - c.g) * (g - c.g) + (b - c.b) * (b - c.b);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    out.heights[i] = lut_index_to_height(best);
  }
  return out;
}

}  // namespace hmap
