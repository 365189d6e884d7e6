#pragma once

// Brute-force reference implementations for tests. Nothing here depends on
// the hmap library.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

struct Dims {
  int n = 1, c = 1, h = 1, w = 1;
  int size() const { return n * c * h * w; }
};

/// Direct nested-loop convolution; weight [O, I, K, K], zero padding.
Vec conv2d(const Vec& x, Dims xd, const Vec& weight, int out_channels, int kernel, const Vec& bias, int stride,
           int padding, Dims* out_dims);

/// Scatter form of the transposed convolution; weight [I, O, K, K].
Vec conv2d_transpose(const Vec& x, Dims xd, const Vec& weight, int out_channels, int kernel, const Vec& bias,
                     int stride, int padding, Dims* out_dims);

/// Training-mode batch normalization with biased batch variance.
Vec batch_norm_train(const Vec& x, Dims xd, const Vec& gamma, const Vec& beta, double eps);

/// y[n, o] = sum_f x[n, f] w[o, f] + b[o]
Vec linear(const Vec& x, int batch, int in_features, const Vec& weight, int out_features, const Vec& bias);

/// Sliding-window SSIM with a full 2-D Gaussian window (valid positions only),
/// averaged per channel then across channels. Images are [C, H, W].
double ssim(const Vec& a, const Vec& b, int channels, int height, int width, int window = 11, double sigma = 1.5,
            double k1 = 0.01, double k2 = 0.03, double range = 1.0);

double mse(const Vec& a, const Vec& b);

/// sum_i lambda_i * mean over batch of (sum |r - f|) / (c h w); taps are [N, C, H, W].
double perceptual(const std::vector<Vec>& real, const std::vector<Vec>& fake, const std::vector<Dims>& dims,
                  const Vec& lambdas);

/// LPIPS over taps of a single image [C, H, W].
double lpips(const std::vector<Vec>& a, const std::vector<Vec>& b, const std::vector<Dims>& dims);

/// Parameter values after each of `steps` Adam updates, starting from p0.
std::vector<Vec> adam_trace(Vec p0, const std::function<Vec(const Vec&)>& grad, int steps, double lr, double beta1,
                            double beta2, double eps);

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h. Throws
/// std::runtime_error if f returns a non-finite value.
Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x, double h = 1e-4);

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

struct GradCheckReport {
  struct Worst {
    std::string parameter;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
  };
  std::string op;
  double max_rel_error = 0.0;
  std::vector<Worst> worst;  // one entry per checked parameter

  /// Adds one parameter's comparison.
  void add(const std::string& parameter, const Vec& analytic, const Vec& numeric);
  std::string describe() const;
};

}  // namespace oracle
