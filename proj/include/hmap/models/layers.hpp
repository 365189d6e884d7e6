#pragma once

#include <random>
#include <string>
#include <vector>

#include "hmap/tensor/ops.hpp"

namespace hmap {

using Rng = std::mt19937_64;
using ops::Mode;

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
struct NamedBuffer {
  std::string name;
  Array<T>* array;
};

/// Parameter tensor drawn from N(mean, stddev^2). Draws happen in double so
/// float and double models built from the same seed agree up to rounding.
template <typename T>
Tensor<T> normal_parameter(Shape shape, double mean, double stddev, Rng& rng);

template <typename T>
class Conv2d {
 public:
  /// Without a bias (use_bias false) the bias is a constant zero tensor that
  /// is not reported as a parameter.
  Conv2d(Index in_channels, Index out_channels, Index kernel, ops::ConvGeometry geom, Rng& rng, bool use_bias = true);

  Tensor<T> forward(const Tensor<T>& x) const { return ops::conv2d(x, weight, bias, geom); }
  void collect(const std::string& prefix, std::vector<NamedParameter<T>>& out) const;

  Tensor<T> weight;  // [out, in, k, k]
  Tensor<T> bias;
  ops::ConvGeometry geom;
  bool use_bias;
};

template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d(Index in_channels, Index out_channels, Index kernel, ops::ConvGeometry geom, Rng& rng,
                  bool use_bias = true);

  Tensor<T> forward(const Tensor<T>& x) const { return ops::conv2d_transpose(x, weight, bias, geom); }
  void collect(const std::string& prefix, std::vector<NamedParameter<T>>& out) const;

  Tensor<T> weight;  // [in, out, k, k]
  Tensor<T> bias;
  ops::ConvGeometry geom;
  bool use_bias;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d(Index channels, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, Mode mode) { return ops::batch_norm2d(x, gamma, beta, mode, stats); }
  void collect(const std::string& prefix, std::vector<NamedParameter<T>>& out) const;
  void collect_buffers(const std::string& prefix, std::vector<NamedBuffer<T>>& out);

  Tensor<T> gamma;
  Tensor<T> beta;
  ops::RunningStats<T> stats;
};

template <typename T>
class Linear {
 public:
  Linear(Index in_features, Index out_features, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) const { return ops::linear(x, weight, bias); }
  void collect(const std::string& prefix, std::vector<NamedParameter<T>>& out) const;

  Tensor<T> weight;  // [out, in]
  Tensor<T> bias;
};

extern template class Conv2d<float>;
extern template class Conv2d<double>;
extern template class ConvTranspose2d<float>;
extern template class ConvTranspose2d<double>;
extern template class BatchNorm2d<float>;
extern template class BatchNorm2d<double>;
extern template class Linear<float>;
extern template class Linear<double>;

}  // namespace hmap
