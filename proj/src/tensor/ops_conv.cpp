#include <Eigen/Core>
#include <cmath>
#include <string>

#include "hmap/tensor/ops.hpp"
#include "ops_detail.hpp"

namespace hmap::ops {

namespace detail {

template <typename T>
void gemm(bool trans_a, bool trans_b, Index m, Index n, Index k, T alpha, const T* a, const T* b, T beta, T* c) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<Mat> C(c, m, n);
  if (beta == T(0)) C.setZero();
  else if (beta != T(1)) C *= beta;
  if (m == 0 || n == 0 || k == 0) return;
  Eigen::Map<const Mat> A(a, trans_a ? k : m, trans_a ? m : k);
  Eigen::Map<const Mat> B(b, trans_b ? n : k, trans_b ? k : n);
  if (!trans_a && !trans_b) C.noalias() += alpha * A * B;
  else if (!trans_a && trans_b) C.noalias() += alpha * A * B.transpose();
  else if (trans_a && !trans_b) C.noalias() += alpha * A.transpose() * B;
  else C.noalias() += alpha * A.transpose() * B.transpose();
}

template void gemm(bool, bool, Index, Index, Index, float, const float*, const float*, float, float*);
template void gemm(bool, bool, Index, Index, Index, double, const double*, const double*, double, double*);

}  // namespace detail

namespace {

using detail::gemm;

// Sliding-window geometry: an image of `channels` x height x width visited by
// a K x K window at `out_h` x `out_w` positions.
struct Window {
  Index batch, channels, height, width, kernel, stride, padding, out_h, out_w;

  Index rows() const { return channels * kernel * kernel; }
  Index cols() const { return batch * out_h * out_w; }
};

// image NCHW -> cols [C*K*K, N*OH*OW]
template <typename T>
void im2col(const Window& g, const T* image, T* cols) {
  const Index positions = g.out_h * g.out_w;
  const Index ncols = g.cols();
  for (Index c = 0; c < g.channels; ++c) {
    for (Index kh = 0; kh < g.kernel; ++kh) {
      for (Index kw = 0; kw < g.kernel; ++kw) {
        T* row = cols + ((c * g.kernel + kh) * g.kernel + kw) * ncols;
        for (Index n = 0; n < g.batch; ++n) {
          const T* plane = image + (n * g.channels + c) * g.height * g.width;
          T* dst = row + n * positions;
          for (Index oh = 0; oh < g.out_h; ++oh) {
            const Index ih = oh * g.stride - g.padding + kh;
            T* d = dst + oh * g.out_w;
            if (ih < 0 || ih >= g.height) {
              std::fill_n(d, g.out_w, T(0));
              continue;
            }
            const T* src = plane + ih * g.width;
            for (Index ow = 0; ow < g.out_w; ++ow) {
              const Index iw = ow * g.stride - g.padding + kw;
              d[ow] = (iw >= 0 && iw < g.width) ? src[iw] : T(0);
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: image += scatter(cols).
template <typename T>
void col2im(const Window& g, const T* cols, T* image) {
  const Index positions = g.out_h * g.out_w;
  const Index ncols = g.cols();
  for (Index c = 0; c < g.channels; ++c) {
    for (Index kh = 0; kh < g.kernel; ++kh) {
      for (Index kw = 0; kw < g.kernel; ++kw) {
        const T* row = cols + ((c * g.kernel + kh) * g.kernel + kw) * ncols;
        for (Index n = 0; n < g.batch; ++n) {
          T* plane = image + (n * g.channels + c) * g.height * g.width;
          const T* src = row + n * positions;
          for (Index oh = 0; oh < g.out_h; ++oh) {
            const Index ih = oh * g.stride - g.padding + kh;
            if (ih < 0 || ih >= g.height) continue;
            T* d = plane + ih * g.width;
            const T* s = src + oh * g.out_w;
            for (Index ow = 0; ow < g.out_w; ++ow) {
              const Index iw = ow * g.stride - g.padding + kw;
              if (iw >= 0 && iw < g.width) d[iw] += s[ow];
            }
          }
        }
      }
    }
  }
}

// [N, C, P] <-> [C, N*P]
template <typename T>
void to_channel_major(const T* src, Index n, Index c, Index p, T* dst) {
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < c; ++j) std::copy_n(src + (i * c + j) * p, p, dst + j * n * p + i * p);
}

template <typename T>
void add_from_channel_major(const T* src, Index n, Index c, Index p, T* dst) {
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < c; ++j) {
      const T* s = src + j * n * p + i * p;
      T* d = dst + (i * c + j) * p;
      for (Index q = 0; q < p; ++q) d[q] += s[q];
    }
}

void check_geometry(const ConvGeometry& geom, const char* op) {
  if (geom.stride < 1) throw ShapeError(std::string(op) + ": stride must be >= 1");
  if (geom.padding < 0) throw ShapeError(std::string(op) + ": padding must be >= 0");
}

void check_rank4(const Shape& s, const char* what) {
  if (s.size() != 4) throw ShapeError(std::string(what) + " must be rank 4, got " + to_string(s));
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, ConvGeometry geom) {
  check_geometry(geom, "conv2d");
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  check_rank4(xs, "conv2d input");
  check_rank4(ws, "conv2d weight");
  if (ws[1] != xs[1]) {
    throw ShapeError("conv2d: input channels (dimension 1) " + std::to_string(xs[1]) +
                     " != weight input channels (dimension 1) " + std::to_string(ws[1]));
  }
  if (ws[2] != ws[3]) throw ShapeError("conv2d: kernel must be square, got " + to_string(ws));
  if (bias.shape() != Shape{ws[0]}) {
    throw ShapeError("conv2d: bias shape " + to_string(bias.shape()) + " != [" + std::to_string(ws[0]) + "]");
  }
  const Index k = ws[2];
  const Index oh = (xs[2] + 2 * geom.padding - k) / geom.stride + 1;
  const Index ow = (xs[3] + 2 * geom.padding - k) / geom.stride + 1;
  if (xs[2] + 2 * geom.padding < k || xs[3] + 2 * geom.padding < k) {
    throw ShapeError("conv2d: kernel " + std::to_string(k) + " larger than padded input " + to_string(xs));
  }
  const Window win{xs[0], xs[1], xs[2], xs[3], k, geom.stride, geom.padding, oh, ow};
  const Index out_c = ws[0];
  const Index positions = oh * ow;

  Array<T> cols(Shape{win.rows(), win.cols()});
  im2col(win, input.value().data(), cols.data());
  std::vector<T> y(static_cast<std::size_t>(out_c * win.cols()));
  gemm<T>(false, false, out_c, win.cols(), win.rows(), T(1), weight.value().data(), cols.data(), T(0), y.data());

  Array<T> out(Shape{xs[0], out_c, oh, ow});
  const T* b = bias.value().data();
  for (Index n = 0; n < xs[0]; ++n)
    for (Index o = 0; o < out_c; ++o) {
      const T* src = y.data() + o * win.cols() + n * positions;
      T* dst = out.data() + (n * out_c + o) * positions;
      for (Index p = 0; p < positions; ++p) dst[p] = src[p] + b[o];
    }

  if (!weight.requires_grad()) cols = Array<T>();
  return make_result<T>(std::move(out), "conv2d", {input, weight, bias},
                        [win, out_c, positions, cols = std::move(cols)](Node<T>& self) {
    const Array<T>& g = *self.grad;
    Node<T>& x = *self.inputs[0];
    Node<T>& w = *self.inputs[1];
    Node<T>& b = *self.inputs[2];
    std::vector<T> dy(static_cast<std::size_t>(out_c * win.cols()));
    to_channel_major(g.data(), win.batch, out_c, positions, dy.data());
    if (w.requires_grad) {
      gemm<T>(false, true, out_c, win.rows(), win.cols(), T(1), dy.data(), cols.data(), T(1),
              w.grad_buffer().data());
    }
    if (b.requires_grad) {
      T* db = b.grad_buffer().data();
      for (Index o = 0; o < out_c; ++o) {
        T acc = T(0);
        const T* row = dy.data() + o * win.cols();
        for (Index i = 0; i < win.cols(); ++i) acc += row[i];
        db[o] += acc;
      }
    }
    if (x.requires_grad) {
      std::vector<T> dcols(static_cast<std::size_t>(win.rows() * win.cols()));
      gemm<T>(true, false, win.rows(), win.cols(), out_c, T(1), w.value.data(), dy.data(), T(0), dcols.data());
      col2im(win, dcols.data(), x.grad_buffer().data());
    }
  });
}

template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                           ConvGeometry geom) {
  check_geometry(geom, "conv2d_transpose");
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  check_rank4(xs, "conv2d_transpose input");
  check_rank4(ws, "conv2d_transpose weight");
  if (ws[0] != xs[1]) {
    throw ShapeError("conv2d_transpose: input channels (dimension 1) " + std::to_string(xs[1]) +
                     " != weight input channels (dimension 0) " + std::to_string(ws[0]));
  }
  if (ws[2] != ws[3]) throw ShapeError("conv2d_transpose: kernel must be square, got " + to_string(ws));
  const Index in_c = ws[0], out_c = ws[1], k = ws[2];
  if (bias.shape() != Shape{out_c}) {
    throw ShapeError("conv2d_transpose: bias shape " + to_string(bias.shape()) + " != [" +
                     std::to_string(out_c) + "]");
  }
  const Index oh = (xs[2] - 1) * geom.stride - 2 * geom.padding + k;
  const Index ow = (xs[3] - 1) * geom.stride - 2 * geom.padding + k;
  if (oh <= 0 || ow <= 0) throw ShapeError("conv2d_transpose: non-positive output size");
  // The forward pass is the adjoint of a conv2d over the output image.
  const Window win{xs[0], out_c, oh, ow, k, geom.stride, geom.padding, xs[2], xs[3]};
  const Index positions = xs[2] * xs[3];

  std::vector<T> xcm(static_cast<std::size_t>(in_c * win.cols()));
  to_channel_major(input.value().data(), xs[0], in_c, positions, xcm.data());
  std::vector<T> cols(static_cast<std::size_t>(win.rows() * win.cols()));
  gemm<T>(true, false, win.rows(), win.cols(), in_c, T(1), weight.value().data(), xcm.data(), T(0), cols.data());
  Array<T> out(Shape{xs[0], out_c, oh, ow});
  col2im(win, cols.data(), out.data());
  const T* b = bias.value().data();
  const Index plane = oh * ow;
  for (Index n = 0; n < xs[0]; ++n)
    for (Index o = 0; o < out_c; ++o) {
      T* d = out.data() + (n * out_c + o) * plane;
      for (Index p = 0; p < plane; ++p) d[p] += b[o];
    }

  if (!weight.requires_grad()) xcm.clear();
  return make_result<T>(std::move(out), "conv2d_transpose", {input, weight, bias},
                        [win, in_c, out_c, positions, xcm = std::move(xcm)](Node<T>& self) {
    const Array<T>& g = *self.grad;
    Node<T>& x = *self.inputs[0];
    Node<T>& w = *self.inputs[1];
    Node<T>& b = *self.inputs[2];
    if (b.requires_grad) {
      T* db = b.grad_buffer().data();
      const Index plane = win.height * win.width;
      for (Index n = 0; n < win.batch; ++n)
        for (Index o = 0; o < out_c; ++o) {
          const T* src = g.data() + (n * out_c + o) * plane;
          T acc = T(0);
          for (Index p = 0; p < plane; ++p) acc += src[p];
          db[o] += acc;
        }
    }
    if (!x.requires_grad && !w.requires_grad) return;
    std::vector<T> dcols(static_cast<std::size_t>(win.rows() * win.cols()));
    im2col(win, g.data(), dcols.data());
    if (w.requires_grad) {
      gemm<T>(false, true, in_c, win.rows(), win.cols(), T(1), xcm.data(), dcols.data(), T(1),
              w.grad_buffer().data());
    }
    if (x.requires_grad) {
      std::vector<T> dx(static_cast<std::size_t>(in_c * win.cols()));
      gemm<T>(false, false, in_c, win.cols(), win.rows(), T(1), w.value.data(), dcols.data(), T(0), dx.data());
      add_from_channel_major(dx.data(), win.batch, in_c, positions, x.grad_buffer().data());
    }
  });
}

template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta, Mode mode,
                       RunningStats<T>& stats) {
  const Shape& xs = input.shape();
  check_rank4(xs, "batch_norm2d input");
  const Index n = xs[0], c = xs[1], plane = xs[2] * xs[3];
  if (n == 0) throw ShapeError("batch_norm2d: empty batch (dimension 0 is 0)");
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw ShapeError("batch_norm2d: gamma/beta must have shape [" + std::to_string(c) + "]");
  }
  if (stats.mean.shape() != Shape{c} || stats.var.shape() != Shape{c}) {
    throw ShapeError("batch_norm2d: running statistics do not match channel count " + std::to_string(c));
  }
  const Index m = n * plane;
  if (mode == Mode::train && m < 2) {
    throw ShapeError("batch_norm2d: train mode needs more than one value per channel, got input " + to_string(xs));
  }
  const T* x = input.value().data();
  const T* gm = gamma.value().data();
  const T* bt = beta.value().data();
  Array<T> xhat(xs);
  Array<T> out(xs);
  std::vector<T> inv_std(static_cast<std::size_t>(c));
  for (Index ch = 0; ch < c; ++ch) {
    T mu, var;
    if (mode == Mode::train) {
      T acc = T(0);
      for (Index i = 0; i < n; ++i) {
        const T* p = x + (i * c + ch) * plane;
        for (Index j = 0; j < plane; ++j) acc += p[j];
      }
      mu = acc / T(m);
      T sq = T(0);
      for (Index i = 0; i < n; ++i) {
        const T* p = x + (i * c + ch) * plane;
        for (Index j = 0; j < plane; ++j) sq += (p[j] - mu) * (p[j] - mu);
      }
      var = sq / T(m);
      stats.mean[ch] = (T(1) - stats.momentum) * stats.mean[ch] + stats.momentum * mu;
      stats.var[ch] = (T(1) - stats.momentum) * stats.var[ch] + stats.momentum * (sq / T(m - 1));
    } else {
      mu = stats.mean[ch];
      var = stats.var[ch];
    }
    const T is = T(1) / std::sqrt(var + stats.eps);
    inv_std[static_cast<std::size_t>(ch)] = is;
    for (Index i = 0; i < n; ++i) {
      const Index base = (i * c + ch) * plane;
      for (Index j = 0; j < plane; ++j) {
        const T h = (x[base + j] - mu) * is;
        xhat[base + j] = h;
        out[base + j] = gm[ch] * h + bt[ch];
      }
    }
  }
  return make_result<T>(std::move(out), "batch_norm2d", {input, gamma, beta},
                        [mode, n, c, plane, m, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
    const Array<T>& g = *self.grad;
    Node<T>& x = *self.inputs[0];
    Node<T>& gam = *self.inputs[1];
    Node<T>& bet = *self.inputs[2];
    for (Index ch = 0; ch < c; ++ch) {
      T sum_g = T(0), sum_gx = T(0);
      for (Index i = 0; i < n; ++i) {
        const Index base = (i * c + ch) * plane;
        for (Index j = 0; j < plane; ++j) {
          sum_g += g[base + j];
          sum_gx += g[base + j] * xhat[base + j];
        }
      }
      if (gam.requires_grad) gam.grad_buffer()[ch] += sum_gx;
      if (bet.requires_grad) bet.grad_buffer()[ch] += sum_g;
      if (!x.requires_grad) continue;
      Array<T>& dx = x.grad_buffer();
      const T scale = gam.value[ch] * inv_std[static_cast<std::size_t>(ch)];
      for (Index i = 0; i < n; ++i) {
        const Index base = (i * c + ch) * plane;
        if (mode == Mode::train) {
          const T k = scale / T(m);
          for (Index j = 0; j < plane; ++j) {
            dx[base + j] += k * (T(m) * g[base + j] - sum_g - xhat[base + j] * sum_gx);
          }
        } else {
          for (Index j = 0; j < plane; ++j) dx[base + j] += scale * g[base + j];
        }
      }
    }
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  if (xs.size() != 2 || ws.size() != 2) throw ShapeError("linear expects rank-2 input and weight");
  if (xs[1] != ws[1]) {
    throw ShapeError("linear: input features (dimension 1) " + std::to_string(xs[1]) + " != weight features " +
                     std::to_string(ws[1]));
  }
  if (bias.shape() != Shape{ws[0]}) throw ShapeError("linear: bias shape mismatch");
  const Index n = xs[0], f = xs[1], o = ws[0];
  Array<T> out(Shape{n, o});
  gemm<T>(false, true, n, o, f, T(1), input.value().data(), weight.value().data(), T(0), out.data());
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < o; ++j) out[i * o + j] += bias.value()[j];
  return make_result<T>(std::move(out), "linear", {input, weight, bias}, [n, f, o](Node<T>& self) {
    const Array<T>& g = *self.grad;
    Node<T>& x = *self.inputs[0];
    Node<T>& w = *self.inputs[1];
    Node<T>& b = *self.inputs[2];
    if (x.requires_grad) gemm<T>(false, false, n, f, o, T(1), g.data(), w.value.data(), T(1), x.grad_buffer().data());
    if (w.requires_grad) gemm<T>(true, false, o, f, n, T(1), g.data(), x.value.data(), T(1), w.grad_buffer().data());
    if (b.requires_grad) {
      Array<T>& db = b.grad_buffer();
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < o; ++j) db[j] += g[i * o + j];
    }
  });
}

#define HMAP_INSTANTIATE(T)                                                                           \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, ConvGeometry);          \
  template Tensor<T> conv2d_transpose(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, ConvGeometry); \
  template Tensor<T> batch_norm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Mode, RunningStats<T>&); \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

HMAP_INSTANTIATE(float)
HMAP_INSTANTIATE(double)
#undef HMAP_INSTANTIATE

}  // namespace hmap::ops
