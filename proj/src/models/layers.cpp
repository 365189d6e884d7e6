#include "hmap/models/layers.hpp"

namespace hmap {

namespace {
constexpr double kInitStd = 0.02;
}

template <typename T>
Tensor<T> normal_parameter(Shape shape, double mean, double stddev, Rng& rng) {
  Array<T> a(std::move(shape));
  std::normal_distribution<double> dist(mean, stddev);
  for (auto& v : a.values()) v = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(a), true);
}

template <typename T>
Conv2d<T>::Conv2d(Index in_channels, Index out_channels, Index kernel, ops::ConvGeometry g, Rng& rng, bool with_bias)
    : weight(normal_parameter<T>({out_channels, in_channels, kernel, kernel}, 0.0, kInitStd, rng)),
      bias(Array<T>(Shape{out_channels}), with_bias),
      geom(g),
      use_bias(with_bias) {}

template <typename T>
void Conv2d<T>::collect(const std::string& prefix, std::vector<NamedParameter<T>>& out) const {
  out.push_back({prefix + ".weight", weight});
  if (use_bias) out.push_back({prefix + ".bias", bias});
}

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(Index in_channels, Index out_channels, Index kernel, ops::ConvGeometry g,
                                    Rng& rng, bool with_bias)
    : weight(normal_parameter<T>({in_channels, out_channels, kernel, kernel}, 0.0, kInitStd, rng)),
      bias(Array<T>(Shape{out_channels}), with_bias),
      geom(g),
      use_bias(with_bias) {}

template <typename T>
void ConvTranspose2d<T>::collect(const std::string& prefix, std::vector<NamedParameter<T>>& out) const {
  out.push_back({prefix + ".weight", weight});
  if (use_bias) out.push_back({prefix + ".bias", bias});
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(Index channels, Rng& rng)
    : gamma(normal_parameter<T>({channels}, 1.0, kInitStd, rng)),
      beta(Array<T>(Shape{channels}), true),
      stats(channels) {}

template <typename T>
void BatchNorm2d<T>::collect(const std::string& prefix, std::vector<NamedParameter<T>>& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

template <typename T>
void BatchNorm2d<T>::collect_buffers(const std::string& prefix, std::vector<NamedBuffer<T>>& out) {
  out.push_back({prefix + ".running_mean", &stats.mean});
  out.push_back({prefix + ".running_var", &stats.var});
}

template <typename T>
Linear<T>::Linear(Index in_features, Index out_features, Rng& rng)
    : weight(normal_parameter<T>({out_features, in_features}, 0.0, kInitStd, rng)),
      bias(Array<T>(Shape{out_features}), true) {}

template <typename T>
void Linear<T>::collect(const std::string& prefix, std::vector<NamedParameter<T>>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

template Tensor<float> normal_parameter<float>(Shape, double, double, Rng&);
template Tensor<double> normal_parameter<double>(Shape, double, double, Rng&);
template class Conv2d<float>;
template class Conv2d<double>;
template class ConvTranspose2d<float>;
template class ConvTranspose2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class Linear<float>;
template class Linear<double>;

}  // namespace hmap
