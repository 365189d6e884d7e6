#include "hmap/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "hmap/data/colormap.hpp"

namespace hmap::metrics {

namespace {

struct ImageDims {
  Index channels, height, width;
};

ImageDims image_dims(const Shape& s, const char* what) {
  if (s.size() == 3) return {s[0], s[1], s[2]};
  if (s.size() == 4 && s[0] == 1) return {s[1], s[2], s[3]};
  throw ShapeError(std::string(what) + ": expected a [C,H,W] or [1,C,H,W] image, got " + to_string(s));
}

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(size));
  const double center = (size - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    g[static_cast<std::size_t>(i)] = std::exp(-(i - center) * (i - center) / (2.0 * sigma * sigma));
    total += g[static_cast<std::size_t>(i)];
  }
  for (double& v : g) v /= total;
  return g;
}

// Separable valid-mode filtering of an H x W plane.
std::vector<double> filter_valid(const std::vector<double>& plane, Index h, Index w, const std::vector<double>& g) {
  const Index k = static_cast<Index>(g.size());
  const Index oh = h - k + 1, ow = w - k + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h * ow));
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (Index t = 0; t < k; ++t) acc += g[static_cast<std::size_t>(t)] * plane[static_cast<std::size_t>(i * w + j + t)];
      tmp[static_cast<std::size_t>(i * ow + j)] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh * ow));
  for (Index i = 0; i < oh; ++i)
    for (Index j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (Index t = 0; t < k; ++t) acc += g[static_cast<std::size_t>(t)] * tmp[static_cast<std::size_t>((i + t) * ow + j)];
      out[static_cast<std::size_t>(i * ow + j)] = acc;
    }
  return out;
}

}  // namespace

template <typename T>
double ssim(const Array<T>& a, const Array<T>& b, const SsimOptions& opt) {
  require_same_shape(a.shape(), b.shape(), "ssim");
  const ImageDims d = image_dims(a.shape(), "ssim");
  if (d.height < opt.window || d.width < opt.window) {
    throw ShapeError("ssim: image " + to_string(a.shape()) + " is smaller than the " + std::to_string(opt.window) +
                     "x" + std::to_string(opt.window) + " window");
  }
  const double c1 = (opt.k1 * opt.range) * (opt.k1 * opt.range);
  const double c2 = (opt.k2 * opt.range) * (opt.k2 * opt.range);
  const auto g = gaussian_kernel(opt.window, opt.sigma);
  const Index plane = d.height * d.width;
  double total = 0.0;
  for (Index c = 0; c < d.channels; ++c) {
    std::vector<double> pa(static_cast<std::size_t>(plane)), pb(pa.size()), aa(pa.size()), bb(pa.size()), ab(pa.size());
    for (Index i = 0; i < plane; ++i) {
      const double va = static_cast<double>(a[c * plane + i]);
      const double vb = static_cast<double>(b[c * plane + i]);
      const auto k = static_cast<std::size_t>(i);
      pa[k] = va;
      pb[k] = vb;
      aa[k] = va * va;
      bb[k] = vb * vb;
      ab[k] = va * vb;
    }
    const auto mu_a = filter_valid(pa, d.height, d.width, g);
    const auto mu_b = filter_valid(pb, d.height, d.width, g);
    const auto e_aa = filter_valid(aa, d.height, d.width, g);
    const auto e_bb = filter_valid(bb, d.height, d.width, g);
    const auto e_ab = filter_valid(ab, d.height, d.width, g);
    double acc = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double va = e_aa[i] - ma * ma;
      const double vb = e_bb[i] - mb * mb;
      const double cov = e_ab[i] - ma * mb;
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total += acc / static_cast<double>(mu_a.size());
  }
  return total / static_cast<double>(d.channels);
}

template <typename T>
double mse(const Array<T>& a, const Array<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mse");
  if (a.size() == 0) throw ShapeError("mse: empty image");
  double acc = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double psnr_from_mse(double m, double peak) {
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / m);
}

template <typename T>
double psnr(const Array<T>& a, const Array<T>& b, double peak) {
  return psnr_from_mse(mse(a, b), peak);
}

template <typename T>
double lpips_from_taps(const std::vector<Array<T>>& taps_a, const std::vector<Array<T>>& taps_b) {
  if (taps_a.size() != taps_b.size()) throw ShapeError("lpips: tap count mismatch");
  constexpr double kEps = 1e-10;
  double total = 0.0;
  for (std::size_t t = 0; t < taps_a.size(); ++t) {
    require_same_shape(taps_a[t].shape(), taps_b[t].shape(), "lpips tap " + std::to_string(t + 1));
    const ImageDims d = image_dims(taps_a[t].shape(), "lpips tap");
    const Index plane = d.height * d.width;
    double acc = 0.0;
    for (Index p = 0; p < plane; ++p) {
      double na = 0.0, nb = 0.0;
      for (Index c = 0; c < d.channels; ++c) {
        const double va = static_cast<double>(taps_a[t][c * plane + p]);
        const double vb = static_cast<double>(taps_b[t][c * plane + p]);
        na += va * va;
        nb += vb * vb;
      }
      na = std::max(std::sqrt(na), kEps);
      nb = std::max(std::sqrt(nb), kEps);
      for (Index c = 0; c < d.channels; ++c) {
        const double diff = static_cast<double>(taps_a[t][c * plane + p]) / na -
                            static_cast<double>(taps_b[t][c * plane + p]) / nb;
        acc += diff * diff;
      }
    }
    total += acc / static_cast<double>(plane);
  }
  return total;
}

template <typename T>
double lpips(const Array<T>& a, const Array<T>& b, Discriminator<T>& d, const Array<T>& x) {
  require_same_shape(a.shape(), b.shape(), "lpips");
  const ImageDims da = image_dims(a.shape(), "lpips");
  const ImageDims dx = image_dims(x.shape(), "lpips conditioning");
  if (dx.height != da.height || dx.width != da.width) throw ShapeError("lpips: conditioning image size mismatch");
  NoGradGuard no_grad;
  auto batch = [](const Array<T>& img, const ImageDims& dims) {
    return Tensor<T>(img.reshaped(Shape{1, dims.channels, dims.height, dims.width}));
  };
  const Tensor<T> xt = batch(x, dx);
  const auto out_a = d.forward(xt, batch(a, da), Mode::eval);
  const auto out_b = d.forward(xt, batch(b, da), Mode::eval);
  std::vector<Array<T>> ta, tb;
  for (const auto& t : out_a.taps) ta.push_back(t.value());
  for (const auto& t : out_b.taps) tb.push_back(t.value());
  return lpips_from_taps(ta, tb);
}

template <typename T>
Array<T> slice_batch(const Array<T>& a, Index n) {
  Shape s(a.shape().begin() + 1, a.shape().end());
  const Index per = numel(s);
  std::vector<T> data(a.data() + n * per, a.data() + (n + 1) * per);
  return Array<T>(std::move(s), std::move(data));
}

template <typename T>
std::vector<ImageMetrics> batch_metrics(const Array<T>& pred, const Array<T>& truth, const Array<T>& x,
                                        Discriminator<T>& d) {
  require_same_shape(pred.shape(), truth.shape(), "batch_metrics");
  if (pred.rank() != 4 || x.rank() != 4 || x.dim(0) != pred.dim(0)) {
    throw ShapeError("batch_metrics: expected matching [N,C,H,W] batches, got " + to_string(pred.shape()) + " and " +
                     to_string(x.shape()));
  }
  std::vector<DiscriminatorOutput<T>> outs;
  {
    NoGradGuard no_grad;
    const Tensor<T> xt(x);
    outs.push_back(d.forward(xt, Tensor<T>(pred), Mode::eval));
    outs.push_back(d.forward(xt, Tensor<T>(truth), Mode::eval));
  }
  std::vector<ImageMetrics> rows;
  for (Index n = 0; n < pred.dim(0); ++n) {
    const Array<T> p = slice_batch(pred, n), t = slice_batch(truth, n);
    ImageMetrics m;
    m.ssim = ssim(p, t);
    m.mse = mse(p, t);
    m.psnr_db = psnr_from_mse(m.mse);
    std::vector<Array<T>> ta, tb;
    for (const auto& tap : outs[0].taps) ta.push_back(slice_batch(tap.value(), n));
    for (const auto& tap : outs[1].taps) tb.push_back(slice_batch(tap.value(), n));
    m.lpips = lpips_from_taps(ta, tb);
    const HeightField hp = decode_height(p.template cast<float>());
    const HeightField ht = decode_height(t.template cast<float>());
    double err = 0.0;
    for (Index i = 0; i < hp.heights.size(); ++i) err += std::abs(hp.heights[i] - ht.heights[i]);
    m.height_mae_um = err / static_cast<double>(hp.heights.size());
    rows.push_back(m);
  }
  return rows;
}

ImageMetrics aggregate(const std::vector<NamedMetrics>& rows) {
  ImageMetrics m;
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.ssim += r.values.ssim;
    m.psnr_db += r.values.psnr_db;
    m.mse += r.values.mse;
    m.lpips += r.values.lpips;
    m.height_mae_um += r.values.height_mae_um;
  }
  const double n = static_cast<double>(rows.size());
  m.ssim /= n;
  m.psnr_db /= n;
  m.mse /= n;
  m.lpips /= n;
  m.height_mae_um /= n;
  return m;
}

#define HMAP_INSTANTIATE(T)                                                                       \
  template double ssim(const Array<T>&, const Array<T>&, const SsimOptions&);                     \
  template double mse(const Array<T>&, const Array<T>&);                                          \
  template double psnr(const Array<T>&, const Array<T>&, double);                                 \
  template double lpips_from_taps(const std::vector<Array<T>>&, const std::vector<Array<T>>&);    \
  template double lpips(const Array<T>&, const Array<T>&, Discriminator<T>&, const Array<T>&);    \
  template std::vector<ImageMetrics> batch_metrics(const Array<T>&, const Array<T>&, const Array<T>&, \
                                                   Discriminator<T>&);

HMAP_INSTANTIATE(float)
HMAP_INSTANTIATE(double)
#undef HMAP_INSTANTIATE

}  // namespace hmap::metrics
