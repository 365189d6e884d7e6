#pragma once

#include <limits>
#include <string>
#include <vector>

#include "hmap/models/networks.hpp"

namespace hmap::metrics {

/// SSIM parameters: Gaussian window, stabilizing constants, dynamic range.
struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double range = 1.0;
};

// Images are [C, H, W] or [1, C, H, W] with values in [0, 1].

/// Mean SSIM over all valid window positions, averaged across channels.
template <typename T>
double ssim(const Array<T>& a, const Array<T>& b, const SsimOptions& opt = {});

template <typename T>
double mse(const Array<T>& a, const Array<T>& b);

/// +infinity when the images are identical.
double psnr_from_mse(double mse, double peak = 1.0);

template <typename T>
double psnr(const Array<T>& a, const Array<T>& b, double peak = 1.0);

/// Per-pixel unit-length channel normalization, squared difference summed over
/// channels, averaged over positions, summed over taps. Taps are [1, C, H, W].
template <typename T>
double lpips_from_taps(const std::vector<Array<T>>& taps_a, const std::vector<Array<T>>& taps_b);

/// LPIPS between `a` and `b` (both conditioned on fundus `x`) using the
/// discriminator's tap activations in eval mode.
template <typename T>
double lpips(const Array<T>& a, const Array<T>& b, Discriminator<T>& d, const Array<T>& x);

struct ImageMetrics {
  double ssim = 0.0;
  double psnr_db = 0.0;
  double mse = 0.0;
  double lpips = 0.0;
  /// Mean absolute height error after decoding both images, micrometers.
  double height_mae_um = 0.0;
};

struct NamedMetrics {
  std::string id;
  ImageMetrics values;
};

struct MetricsReport {
  ImageMetrics aggregate;
  std::vector<NamedMetrics> per_image;
};

/// Per-image metrics for batches [N, C, H, W] of predictions and ground-truth
/// encoded heightmaps; LPIPS conditions the discriminator on fundus batch `x`.
template <typename T>
std::vector<ImageMetrics> batch_metrics(const Array<T>& pred, const Array<T>& truth, const Array<T>& x,
                                        Discriminator<T>& d);

/// Aggregate = arithmetic mean of each per-image column.
ImageMetrics aggregate(const std::vector<NamedMetrics>& rows);

}  // namespace hmap::metrics
