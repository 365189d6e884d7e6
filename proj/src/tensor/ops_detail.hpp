#pragma once

#include "hmap/tensor/tensor.hpp"

namespace hmap::ops::detail {

/// grad(node)[i] += f(i) for every element, if the node is differentiable.
template <typename T, typename F>
void accumulate_with(Node<T>& node, F&& f) {
  if (!node.requires_grad) return;
  Array<T>& g = node.grad_buffer();
  T* d = g.data();
  const Index n = g.size();
  for (Index i = 0; i < n; ++i) d[i] += f(i);
}

// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C.
template <typename T>
void gemm(bool trans_a, bool trans_b, Index m, Index n, Index k, T alpha, const T* a, const T* b, T beta, T* c);

}  // namespace hmap::ops::detail
