#include <cmath>

#include "hmap/tensor/ops.hpp"
#include "ops_detail.hpp"

namespace hmap::ops {

using detail::accumulate_with;

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Array<T> out = a.value();
  const T* pb = b.value().data();
  for (Index i = 0; i < out.size(); ++i) out[i] += pb[i];
  return make_result<T>(std::move(out), "add", {a, b}, [](Node<T>& self) {
    const Array<T>& g = *self.grad;
    for (auto& in : self.inputs) accumulate_with(*in, [&](Index i) { return g[i]; });
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Array<T> out = a.value();
  const T* pb = b.value().data();
  for (Index i = 0; i < out.size(); ++i) out[i] -= pb[i];
  return make_result<T>(std::move(out), "sub", {a, b}, [](Node<T>& self) {
    const Array<T>& g = *self.grad;
    accumulate_with(*self.inputs[0], [&](Index i) { return g[i]; });
    accumulate_with(*self.inputs[1], [&](Index i) { return -g[i]; });
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Array<T> out = a.value();
  const T* pb = b.value().data();
  for (Index i = 0; i < out.size(); ++i) out[i] *= pb[i];
  return make_result<T>(std::move(out), "mul", {a, b}, [](Node<T>& self) {
    const Array<T>& g = *self.grad;
    const Array<T>& va = self.inputs[0]->value;
    const Array<T>& vb = self.inputs[1]->value;
    accumulate_with(*self.inputs[0], [&](Index i) { return g[i] * vb[i]; });
    accumulate_with(*self.inputs[1], [&](Index i) { return g[i] * va[i]; });
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  Array<T> out = a.value();
  for (auto& v : out.values()) v += s;
  return make_result<T>(std::move(out), "add_scalar", {a}, [](Node<T>& self) {
    const Array<T>& g = *self.grad;
    accumulate_with(*self.inputs[0], [&](Index i) { return g[i]; });
  });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
  Array<T> out = a.value();
  for (auto& v : out.values()) v *= s;
  return make_result<T>(std::move(out), "mul_scalar", {a}, [s](Node<T>& self) {
    const Array<T>& g = *self.grad;
    accumulate_with(*self.inputs[0], [&](Index i) { return g[i] * s; });
  });
}

template <typename T>
Tensor<T> mul_constant(const Tensor<T>& a, const Array<T>& c) {
  require_same_shape(a.shape(), c.shape(), "mul_constant");
  Array<T> out = a.value();
  for (Index i = 0; i < out.size(); ++i) out[i] *= c[i];
  return make_result<T>(std::move(out), "mul_constant", {a}, [c](Node<T>& self) {
    const Array<T>& g = *self.grad;
    accumulate_with(*self.inputs[0], [&](Index i) { return g[i] * c[i]; });
  });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  Array<T> out = a.value();
  for (auto& v : out.values()) v *= v;
  return make_result<T>(std::move(out), "square", {a}, [](Node<T>& self) {
    const Array<T>& g = *self.grad;
    const Array<T>& x = self.inputs[0]->value;
    accumulate_with(*self.inputs[0], [&](Index i) { return T(2) * x[i] * g[i]; });
  });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
  Array<T> out = a.value();
  for (auto& v : out.values()) v = std::abs(v);
  return make_result<T>(std::move(out), "abs", {a}, [](Node<T>& self) {
    const Array<T>& g = *self.grad;
    const Array<T>& x = self.inputs[0]->value;
    accumulate_with(*self.inputs[0], [&](Index i) {
      return x[i] > T(0) ? g[i] : (x[i] < T(0) ? -g[i] : T(0));
    });
  });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
  Array<T> out = a.value();
  for (auto& v : out.values()) {
    if (v < T(0)) throw Error("sqrt of negative value");
    v = std::sqrt(v);
  }
  return make_result<T>(std::move(out), "sqrt", {a}, [](Node<T>& self) {
    const Array<T>& g = *self.grad;
    const Array<T>& y = self.value;
    accumulate_with(*self.inputs[0], [&](Index i) { return g[i] / (T(2) * y[i]); });
  });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  Array<T> out = a.value();
  for (auto& v : out.values()) v = std::tanh(v);
  return make_result<T>(std::move(out), "tanh", {a}, [](Node<T>& self) {
    const Array<T>& g = *self.grad;
    const Array<T>& y = self.value;
    accumulate_with(*self.inputs[0], [&](Index i) { return g[i] * (T(1) - y[i] * y[i]); });
  });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  if (!(slope >= T(0) && slope < T(1))) throw Error("leaky_relu slope must lie in [0, 1)");
  Array<T> out = a.value();
  for (auto& v : out.values()) v = v > T(0) ? v : slope * v;
  return make_result<T>(std::move(out), "leaky_relu", {a}, [slope](Node<T>& self) {
    const Array<T>& g = *self.grad;
    const Array<T>& x = self.inputs[0]->value;
    accumulate_with(*self.inputs[0], [&](Index i) { return x[i] > T(0) ? g[i] : slope * g[i]; });
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = T(0);
  for (T v : a.value().values()) acc += v;
  return make_result<T>(Array<T>::scalar(acc), "sum", {a}, [](Node<T>& self) {
    const T g = (*self.grad)[0];
    accumulate_with(*self.inputs[0], [&](Index) { return g; });
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  const Index n = a.size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  T acc = T(0);
  for (T v : a.value().values()) acc += v;
  return make_result<T>(Array<T>::scalar(acc / T(n)), "mean", {a}, [n](Node<T>& self) {
    const T g = (*self.grad)[0] / T(n);
    accumulate_with(*self.inputs[0], [&](Index) { return g; });
  });
}

template <typename T>
Tensor<T> norm_l1(const Tensor<T>& a) {
  return sum(abs(a));
}

template <typename T>
Tensor<T> norm_l2(const Tensor<T>& a) {
  return sqrt(sum(square(a)));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  Array<T> out = a.value().reshaped(std::move(shape));
  return make_result<T>(std::move(out), "reshape", {a}, [](Node<T>& self) {
    const Array<T>& g = *self.grad;
    accumulate_with(*self.inputs[0], [&](Index i) { return g[i]; });
  });
}

namespace {

// View of a contiguous array as [outer, axis, inner].
struct AxisSplit {
  Index outer = 1;
  Index extent = 1;
  Index inner = 1;
};

AxisSplit split_at(const Shape& s, Index axis) {
  AxisSplit r;
  for (Index i = 0; i < static_cast<Index>(s.size()); ++i) {
    if (i < axis) r.outer *= s[i];
    else if (i == axis) r.extent = s[i];
    else r.inner *= s[i];
  }
  return r;
}

}  // namespace

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, Index axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts[0].shape();
  const Index rank = static_cast<Index>(first.size());
  if (axis < 0 || axis >= rank) throw ShapeError("concat axis " + std::to_string(axis) + " out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<Index> extents;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (static_cast<Index>(s.size()) != rank) throw ShapeError("concat: rank mismatch");
    for (Index d = 0; d < rank; ++d) {
      if (d != axis && s[d] != first[d]) {
        throw ShapeError("concat: dimension " + std::to_string(d) + " mismatch (" + std::to_string(s[d]) +
                         " vs " + std::to_string(first[d]) + ")");
      }
    }
    extents.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  Array<T> out(out_shape);
  const AxisSplit os = split_at(out_shape, axis);
  Index offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Array<T>& v = parts[k].value();
    const Index block = extents[k] * os.inner;
    for (Index o = 0; o < os.outer; ++o) {
      std::copy_n(v.data() + o * block, block, out.data() + (o * os.extent + offset) * os.inner);
    }
    offset += extents[k];
  }
  return make_result<T>(std::move(out), "concat", parts, [axis, extents](Node<T>& self) {
    const Array<T>& g = *self.grad;
    const AxisSplit os = split_at(g.shape(), axis);
    Index off = 0;
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      Node<T>& in = *self.inputs[k];
      const Index block = extents[k] * os.inner;
      if (in.requires_grad) {
        Array<T>& dst = in.grad_buffer();
        for (Index o = 0; o < os.outer; ++o) {
          const T* src = g.data() + (o * os.extent + off) * os.inner;
          T* d = dst.data() + o * block;
          for (Index i = 0; i < block; ++i) d[i] += src[i];
        }
      }
      off += extents[k];
    }
  });
}

template <typename T>
Tensor<T> narrow(const Tensor<T>& a, Index axis, Index start, Index length) {
  const Shape& s = a.shape();
  if (axis < 0 || axis >= static_cast<Index>(s.size())) throw ShapeError("narrow: axis out of range");
  if (start < 0 || length < 0 || start + length > s[axis]) {
    throw ShapeError("narrow: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") exceeds dimension " + std::to_string(axis) + " of extent " + std::to_string(s[axis]));
  }
  Shape out_shape = s;
  out_shape[axis] = length;
  Array<T> out(out_shape);
  const AxisSplit is = split_at(s, axis);
  const Index block = length * is.inner;
  for (Index o = 0; o < is.outer; ++o) {
    std::copy_n(a.value().data() + (o * is.extent + start) * is.inner, block, out.data() + o * block);
  }
  return make_result<T>(std::move(out), "narrow", {a}, [axis, start, length](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    const Array<T>& g = *self.grad;
    Array<T>& dst = in.grad_buffer();
    const AxisSplit is = split_at(in.value.shape(), axis);
    const Index block = length * is.inner;
    for (Index o = 0; o < is.outer; ++o) {
      T* d = dst.data() + (o * is.extent + start) * is.inner;
      const T* src = g.data() + o * block;
      for (Index i = 0; i < block; ++i) d[i] += src[i];
    }
  });
}

template <typename T>
Tensor<T> global_avg_pool2d(const Tensor<T>& input) {
  const Shape& s = input.shape();
  if (s.size() != 4) throw ShapeError("global_avg_pool2d expects NCHW input, got " + to_string(s));
  const Index n = s[0], c = s[1], hw = s[2] * s[3];
  Array<T> out(Shape{n, c});
  const T* x = input.value().data();
  for (Index i = 0; i < n * c; ++i) {
    T acc = T(0);
    for (Index j = 0; j < hw; ++j) acc += x[i * hw + j];
    out[i] = acc / T(hw);
  }
  return make_result<T>(std::move(out), "global_avg_pool2d", {input}, [hw](Node<T>& self) {
    const Array<T>& g = *self.grad;
    accumulate_with(*self.inputs[0], [&](Index i) { return g[i / hw] / T(hw); });
  });
}

template <typename T>
Tensor<T> downsample2x(const Tensor<T>& input) {
  const Shape& s = input.shape();
  if (s.size() != 4) throw ShapeError("downsample2x expects NCHW input, got " + to_string(s));
  const Index nc = s[0] * s[1], h = s[2], w = s[3];
  const Index oh = (h + 1) / 2, ow = (w + 1) / 2;
  Array<T> out(Shape{s[0], s[1], oh, ow});
  const T* x = input.value().data();
  for (Index p = 0; p < nc; ++p)
    for (Index i = 0; i < oh; ++i)
      for (Index j = 0; j < ow; ++j) out[(p * oh + i) * ow + j] = x[(p * h + 2 * i) * w + 2 * j];
  return make_result<T>(std::move(out), "downsample2x", {input}, [nc, h, w, oh, ow](Node<T>& self) {
    Node<T>& in = *self.inputs[0];
    if (!in.requires_grad) return;
    const Array<T>& g = *self.grad;
    Array<T>& dst = in.grad_buffer();
    for (Index p = 0; p < nc; ++p)
      for (Index i = 0; i < oh; ++i)
        for (Index j = 0; j < ow; ++j) dst[(p * h + 2 * i) * w + 2 * j] += g[(p * oh + i) * ow + j];
  });
}

#define HMAP_INSTANTIATE(T)                                                          \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                \
  template Tensor<T> mul_scalar(const Tensor<T>&, T);                                \
  template Tensor<T> mul_constant(const Tensor<T>&, const Array<T>&);                \
  template Tensor<T> square(const Tensor<T>&);                                       \
  template Tensor<T> abs(const Tensor<T>&);                                          \
  template Tensor<T> sqrt(const Tensor<T>&);                                         \
  template Tensor<T> tanh(const Tensor<T>&);                                         \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                \
  template Tensor<T> sum(const Tensor<T>&);                                          \
  template Tensor<T> mean(const Tensor<T>&);                                         \
  template Tensor<T> norm_l1(const Tensor<T>&);                                      \
  template Tensor<T> norm_l2(const Tensor<T>&);                                      \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                               \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, Index);                   \
  template Tensor<T> narrow(const Tensor<T>&, Index, Index, Index);                  \
  template Tensor<T> global_avg_pool2d(const Tensor<T>&);                            \
  template Tensor<T> downsample2x(const Tensor<T>&);

HMAP_INSTANTIATE(float)
HMAP_INSTANTIATE(double)
#undef HMAP_INSTANTIATE

}  // namespace hmap::ops
