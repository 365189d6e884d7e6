#pragma once

#include <cstdint>
#include <vector>

#include "hmap/data/colormap.hpp"
#include "hmap/models/layers.hpp"

namespace hmap::synth {

// All coordinates are normalized to [0, 1] image units.

struct Lesion {
  double cx = 0.5, cy = 0.5;
  double radius = 0.05;         // Gaussian sigma of the bump and of the blob
  double amplitude_um = 100.0;  // peak elevation above the baseline
};

struct Vessel {
  double end_x = 0.5, end_y = 0.5;
  double ctrl_x = 0.5, ctrl_y = 0.5;  // quadratic Bezier control point
  double width = 0.01;
};

/// Generative parameters of one synthetic fundus/heightmap pair.
struct SampleParams {
  double fovea_x = 0.5, fovea_y = 0.5;
  double disc_x = 0.8, disc_y = 0.5;
  double illumination = 1.0;
  double texture_phase[4] = {0, 0, 0, 0};
  std::vector<Vessel> vessels;
  std::vector<Lesion> lesions;
};

/// Smooth foveal-depression baseline height at distance `r` from the fovea.
double baseline_height(double r);

/// Draws parameters with 1-4 lesions and 4-6 vessels.
SampleParams draw_params(Rng& rng);

/// Heights in micrometers: baseline plus one Gaussian bump per lesion,
/// clamped to [0, 500]. Pure function of the parameters.
HeightField render_height(const SampleParams& p, Index resolution);

/// Fundus-like RGB: circular field of view, dark macula over the foveal
/// depression, vessels from the optic disc, bright lesion blobs whose
/// brightness scales with the bump amplitude.
Image render_fundus(const SampleParams& p, Index resolution);

/// Seed for sample `index` of a dataset seeded with `seed`.
std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace hmap::synth
