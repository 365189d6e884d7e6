#pragma once

#include <vector>

#include "hmap/tensor/tensor.hpp"

namespace hmap::ops {

// Elementwise, identical shapes required.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& a, T s);
/// Multiplies by a constant array that takes no part in differentiation.
template <typename T> Tensor<T> mul_constant(const Tensor<T>& a, const Array<T>& c);

template <typename T> Tensor<T> square(const Tensor<T>& a);
/// Subgradient at 0 is 0.
template <typename T> Tensor<T> abs(const Tensor<T>& a);
template <typename T> Tensor<T> sqrt(const Tensor<T>& a);
template <typename T> Tensor<T> tanh(const Tensor<T>& a);
/// max(x, slope*x); the derivative at exactly 0 is `slope`.
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& a, T slope = T(0.2));

// Reductions to a rank-0 scalar.
template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
template <typename T> Tensor<T> norm_l1(const Tensor<T>& a);
template <typename T> Tensor<T> norm_l2(const Tensor<T>& a);

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, Index axis);
template <typename T> Tensor<T> narrow(const Tensor<T>& a, Index axis, Index start, Index length);

struct ConvGeometry {
  Index stride = 1;
  Index padding = 0;
};

/// input NCHW, weight [O, I, K, K], bias [O].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, ConvGeometry geom);

/// input NCHW, weight [I, O, K, K], bias [O]. Output extent (H-1)*stride - 2*padding + K.
template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, ConvGeometry geom);

enum class Mode { train, eval };

template <typename T>
struct RunningStats {
  Array<T> mean;
  Array<T> var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  explicit RunningStats(Index channels = 0)
      : mean(Shape{channels}, T(0)), var(Shape{channels}, T(1)) {}
};

/// Train mode normalizes by batch statistics (biased variance) and updates
/// `stats` (unbiased variance); eval mode normalizes by `stats`.
template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta, Mode mode,
                       RunningStats<T>& stats);

/// NCHW -> NC.
template <typename T> Tensor<T> global_avg_pool2d(const Tensor<T>& input);

/// input [N, F], weight [O, F], bias [O] -> [N, O].
template <typename T> Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

/// Nearest-neighbour stride-2 downsample: keeps even rows and columns.
template <typename T> Tensor<T> downsample2x(const Tensor<T>& input);

}  // namespace hmap::ops
