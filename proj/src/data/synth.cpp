#include "hmap/data/synth.hpp"

#include <algorithm>
#include <cmath>

#include "hmap/seed.hpp"

namespace hmap::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kFovRadius = 0.47;
constexpr double kFoveaSigma = 0.10;
constexpr double kMaxLesionAmplitude = 160.0;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

double sq(double v) { return v * v; }

// Squared distance from (x, y) to the segment a-b.
double segment_dist2(double x, double y, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((x - ax) * dx + (y - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return sq(x - (ax + t * dx)) + sq(y - (ay + t * dy));
}

}  // namespace

double baseline_height(double r) {
  const double rim = std::min(r / 0.5, 1.0);
  return 260.0 + 60.0 * rim * rim - 110.0 * std::exp(-r * r / (2.0 * kFoveaSigma * kFoveaSigma));
}

std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index) { return derive_seed(seed, {0x5a3d1eull, index}); }

SampleParams draw_params(Rng& rng) {
  SampleParams p;
  p.fovea_x = 0.5 + uniform(rng, -0.06, 0.06);
  p.fovea_y = 0.5 + uniform(rng, -0.06, 0.06);
  const double side = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
  p.disc_x = p.fovea_x + side * uniform(rng, 0.28, 0.34);
  p.disc_y = p.fovea_y + uniform(rng, -0.04, 0.04);
  p.illumination = uniform(rng, 0.85, 1.1);
  for (double& ph : p.texture_phase) ph = uniform(rng, 0.0, 2.0 * kPi);

  const int vessels = std::uniform_int_distribution<int>(4, 6)(rng);
  for (int i = 0; i < vessels; ++i) {
    // Arcades sweep from the disc around the macula toward the far side.
    const double up = (i % 2 == 0) ? -1.0 : 1.0;
    Vessel v;
    v.end_x = p.fovea_x - side * uniform(rng, 0.05, 0.35);
    v.end_y = p.fovea_y + up * uniform(rng, 0.12, 0.42);
    v.ctrl_x = p.fovea_x + side * uniform(rng, 0.0, 0.15);
    v.ctrl_y = p.fovea_y + up * uniform(rng, 0.25, 0.45);
    v.width = uniform(rng, 0.006, 0.012);
    p.vessels.push_back(v);
  }

  const int lesions = std::uniform_int_distribution<int>(1, 4)(rng);
  for (int i = 0; i < lesions; ++i) {
    Lesion l;
    const double angle = uniform(rng, 0.0, 2.0 * kPi);
    const double dist = uniform(rng, 0.04, 0.28);
    l.cx = 0.5 + dist * std::cos(angle);
    l.cy = 0.5 + dist * std::sin(angle);
    l.radius = uniform(rng, 0.03, 0.07);
    l.amplitude_um = uniform(rng, 60.0, kMaxLesionAmplitude);
    p.lesions.push_back(l);
  }
  return p;
}

HeightField render_height(const SampleParams& p, Index resolution) {
  HeightField f{Array<double>(Shape{resolution, resolution})};
  for (Index i = 0; i < resolution; ++i) {
    const double y = (i + 0.5) / resolution;
    for (Index j = 0; j < resolution; ++j) {
      const double x = (j + 0.5) / resolution;
      double h = baseline_height(std::hypot(x - p.fovea_x, y - p.fovea_y));
      for (const Lesion& l : p.lesions) {
        h += l.amplitude_um * std::exp(-(sq(x - l.cx) + sq(y - l.cy)) / (2.0 * sq(l.radius)));
      }
      f.heights[i * resolution + j] = std::clamp(h, 0.0, kMaxHeightUm);
    }
  }
  return f;
}

Image render_fundus(const SampleParams& p, Index resolution) {
  const Index plane = resolution * resolution;
  Image img(Shape{3, resolution, resolution});
  constexpr int kSegments = 24;
  // Vessel polylines sampled from their Bezier curves.
  std::vector<std::vector<std::pair<double, double>>> polylines;
  for (const Vessel& v : p.vessels) {
    std::vector<std::pair<double, double>> pts;
    for (int s = 0; s <= kSegments; ++s) {
      const double t = static_cast<double>(s) / kSegments;
      const double a = sq(1 - t), b = 2 * t * (1 - t), c = t * t;
      pts.emplace_back(a * p.disc_x + b * v.ctrl_x + c * v.end_x, a * p.disc_y + b * v.ctrl_y + c * v.end_y);
    }
    polylines.push_back(std::move(pts));
  }
  const double pixel = 1.0 / resolution;
  for (Index i = 0; i < resolution; ++i) {
    const double y = (i + 0.5) / resolution;
    for (Index j = 0; j < resolution; ++j) {
      const double x = (j + 0.5) / resolution;
      const double rc = std::hypot(x - 0.5, y - 0.5);
      const double mask = std::clamp((kFovRadius - rc) / pixel + 0.5, 0.0, 1.0);
      if (mask <= 0.0) continue;

      const double texture = 0.025 * (std::sin(23.0 * x + p.texture_phase[0]) * std::sin(19.0 * y + p.texture_phase[1]) +
                                      std::sin(41.0 * (x + y) + p.texture_phase[2]) * 0.5 +
                                      std::sin(37.0 * (x - y) + p.texture_phase[3]) * 0.5);
      const double vignette = 1.0 - 0.35 * rc * rc / (kFovRadius * kFovRadius);
      double r = (0.80 + texture) * vignette * p.illumination;
      double g = (0.38 + 0.6 * texture) * vignette * p.illumination;
      double b = (0.18 + 0.3 * texture) * vignette * p.illumination;

      // Macular pigment darkens exactly where the foveal depression lies.
      const double rf2 = sq(x - p.fovea_x) + sq(y - p.fovea_y);
      const double macula = 1.0 - 0.45 * std::exp(-rf2 / (2.0 * kFoveaSigma * kFoveaSigma));
      r *= macula;
      g *= macula;
      b *= macula;

      const double rd = std::hypot(x - p.disc_x, y - p.disc_y);
      const double disc = std::clamp((0.06 - rd) / (2 * pixel) + 0.5, 0.0, 1.0);
      r += disc * (0.98 - r);
      g += disc * (0.85 - g);
      b += disc * (0.60 - b);

      for (std::size_t k = 0; k < polylines.size(); ++k) {
        const auto& pts = polylines[k];
        double d2 = INFINITY;
        for (std::size_t s = 0; s + 1 < pts.size(); ++s) {
          d2 = std::min(d2, segment_dist2(x, y, pts[s].first, pts[s].second, pts[s + 1].first, pts[s + 1].second));
        }
        const double wv = p.vessels[k].width;
        const double strength = 0.6 * std::exp(-d2 / (2.0 * wv * wv)) * (1.0 - disc);
        r += strength * (0.45 - r);
        g += strength * (0.08 - g);
        b += strength * (0.06 - b);
      }

      for (const Lesion& l : p.lesions) {
        const double w = 0.85 * (l.amplitude_um / kMaxLesionAmplitude) *
                         std::exp(-(sq(x - l.cx) + sq(y - l.cy)) / (2.0 * sq(l.radius)));
        r += w * (1.00 - r);
        g += w * (0.92 - g);
        b += w * (0.55 - b);
      }

      const Index idx = i * resolution + j;
      img[idx] = static_cast<float>(std::clamp(r * mask, 0.0, 1.0));
      img[plane + idx] = static_cast<float>(std::clamp(g * mask, 0.0, 1.0));
      img[2 * plane + idx] = static_cast<float>(std::clamp(b * mask, 0.0, 1.0));
    }
  }
  return img;
}

}  // namespace hmap::synth
