#pragma once

#include <cstdint>
#include <vector>

#include "hmap/models/layers.hpp"

namespace hmap {

struct AdamOptions {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  Array<T> m;
  Array<T> v;
  std::int64_t step = 0;
};

/// One bias-corrected Adam step. Moments are allocated on first use.
template <typename T>
void adam_update(Array<T>& param, const Array<T>& grad, AdamState<T>& state, double lr, const AdamOptions& opt);

/// Adam over a fixed set of named parameters.
template <typename T>
class Adam {
 public:
  Adam(std::vector<NamedParameter<T>> params, AdamOptions options);

  /// Updates every parameter that holds a gradient, then clears gradients.
  void step(double lr);
  void zero_grad();

  const std::vector<NamedParameter<T>>& parameters() const { return params_; }
  std::vector<AdamState<T>>& states() { return states_; }
  const std::vector<AdamState<T>>& states() const { return states_; }
  const AdamOptions& options() const { return options_; }
  void set_options(const AdamOptions& o) { options_ = o; }

 private:
  std::vector<NamedParameter<T>> params_;
  std::vector<AdamState<T>> states_;
  AdamOptions options_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace hmap
