#include "hmap/losses.hpp"

#include <cmath>
#include <string>

namespace hmap {

void LossWeights::validate(std::size_t tap_count) const {
  if (lambda_per_tap.size() != tap_count) {
    throw ConfigError("lambda_per_tap has " + std::to_string(lambda_per_tap.size()) + " entries but the discriminator exposes " +
                      std::to_string(tap_count) + " taps");
  }
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError(std::string(name) + " must be finite and >= 0");
  };
  for (double l : lambda_per_tap) check(l, "lambda_per_tap");
  check(alpha_perceptual, "alpha_perceptual");
  check(alpha_l2, "alpha_l2");
  check(alpha_adv, "alpha_adv");
}

namespace {

template <typename T>
Tensor<T> half_mean_sq_dev(const Tensor<T>& logits, double target) {
  return ops::mul_scalar(ops::mean(ops::square(ops::add_scalar(logits, static_cast<T>(-target)))), T(0.5));
}

template <typename T>
void require_nonempty(const Tensor<T>& t, const char* what) {
  if (!t.defined() || t.size() == 0) throw ShapeError(std::string(what) + ": empty batch");
}

}  // namespace

template <typename T>
Tensor<T> lsgan_d_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
  require_nonempty(d_real, "lsgan_d_loss");
  require_nonempty(d_fake, "lsgan_d_loss");
  if (d_real.size() != d_fake.size()) {
    throw ShapeError("lsgan_d_loss: batch length mismatch " + std::to_string(d_real.size()) + " vs " +
                     std::to_string(d_fake.size()));
  }
  return ops::add(half_mean_sq_dev(d_real, LossWeights::kTargetReal),
                  half_mean_sq_dev(d_fake, LossWeights::kTargetFake));
}

template <typename T>
Tensor<T> lsgan_g_loss(const Tensor<T>& d_fake) {
  require_nonempty(d_fake, "lsgan_g_loss");
  return half_mean_sq_dev(d_fake, LossWeights::kTargetGenerator);
}

template <typename T>
Tensor<T> l2_loss(const Tensor<T>& y, const Tensor<T>& y_hat) {
  require_same_shape(y.shape(), y_hat.shape(), "l2_loss");
  require_nonempty(y, "l2_loss");
  return ops::mean(ops::square(ops::sub(y, y_hat)));
}

template <typename T>
Tensor<T> perceptual_loss(const std::vector<Tensor<T>>& taps_real, const std::vector<Tensor<T>>& taps_fake,
                          const LossWeights& weights) {
  if (taps_real.size() != taps_fake.size()) {
    throw ShapeError("perceptual_loss: " + std::to_string(taps_real.size()) + " real taps vs " +
                     std::to_string(taps_fake.size()) + " fake taps");
  }
  if (weights.lambda_per_tap.size() != taps_real.size()) {
    throw ShapeError("perceptual_loss: " + std::to_string(weights.lambda_per_tap.size()) + " weights for " +
                     std::to_string(taps_real.size()) + " taps");
  }
  Tensor<T> total(Array<T>::scalar(T(0)));
  for (std::size_t i = 0; i < taps_real.size(); ++i) {
    require_same_shape(taps_real[i].shape(), taps_fake[i].shape(), "perceptual_loss tap " + std::to_string(i + 1));
    // Every batch element has w*h*d entries, so the per-element normalized L1
    // averaged over the batch is the mean over the whole tensor.
    Tensor<T> p = ops::mean(ops::abs(ops::sub(taps_real[i].detach(), taps_fake[i])));
    total = ops::add(total, ops::mul_scalar(p, static_cast<T>(weights.lambda_per_tap[i])));
  }
  return total;
}

template <typename T>
Tensor<T> generator_total_loss(const GeneratorLossParts<T>& parts, const LossWeights& weights) {
  return ops::add(ops::add(ops::mul_scalar(parts.perceptual, static_cast<T>(weights.alpha_perceptual)),
                           ops::mul_scalar(parts.l2, static_cast<T>(weights.alpha_l2))),
                  ops::mul_scalar(parts.adversarial, static_cast<T>(weights.alpha_adv)));
}

#define HMAP_INSTANTIATE(T)                                                                             \
  template Tensor<T> lsgan_d_loss(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> lsgan_g_loss(const Tensor<T>&);                                                    \
  template Tensor<T> l2_loss(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> perceptual_loss(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&,      \
                                     const LossWeights&);                                               \
  template Tensor<T> generator_total_loss(const GeneratorLossParts<T>&, const LossWeights&);

HMAP_INSTANTIATE(float)
HMAP_INSTANTIATE(double)
#undef HMAP_INSTANTIATE

}  // namespace hmap
