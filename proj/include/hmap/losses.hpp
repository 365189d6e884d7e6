#pragma once

#include <vector>

#include "hmap/tensor/ops.hpp"

namespace hmap {

/// Coefficients of the generator objective.
struct LossWeights {
  // Least-squares targets: fake -> a, real -> b, generator aims for c.
  static constexpr double kTargetFake = 0.0;
  static constexpr double kTargetReal = 1.0;
  static constexpr double kTargetGenerator = 1.0;

  /// One weight per discriminator tap, in ascending layer order.
  std::vector<double> lambda_per_tap{5.0, 1.0, 5.0, 5.0};
  double alpha_perceptual = 1.0;
  double alpha_l2 = 10.0;
  double alpha_adv = 1.0;

  void validate(std::size_t tap_count) const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// 1/2 E[(D(x,y) - b)^2] + 1/2 E[(D(x,G(x)) - a)^2]
template <typename T>
Tensor<T> lsgan_d_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake);

/// 1/2 E[(D(x,G(x)) - c)^2]
template <typename T>
Tensor<T> lsgan_g_loss(const Tensor<T>& d_fake);

/// Mean squared difference over all elements.
template <typename T>
Tensor<T> l2_loss(const Tensor<T>& y, const Tensor<T>& y_hat);

/// sum_i lambda_i * ||real_i - fake_i||_1 / (w_i h_i d_i), averaged over the
/// batch. Real taps are detached.
template <typename T>
Tensor<T> perceptual_loss(const std::vector<Tensor<T>>& taps_real, const std::vector<Tensor<T>>& taps_fake,
                          const LossWeights& weights);

template <typename T>
struct GeneratorLossParts {
  Tensor<T> perceptual;
  Tensor<T> l2;
  Tensor<T> adversarial;
};

/// alpha_perceptual * L_perceptual + alpha_l2 * L_l2 + alpha_adv * L_adv
template <typename T>
Tensor<T> generator_total_loss(const GeneratorLossParts<T>& parts, const LossWeights& weights);

}  // namespace hmap
