#pragma once

#include <optional>
#include <vector>

#include "hmap/models/layers.hpp"
#include "hmap/models/specs.hpp"

namespace hmap {

/// Encoder of stride-2 4x4 convolutions, decoder of stride-2 4x4 transposed
/// convolutions; decoder level k consumes [decoder k+1 output, encoder k output].
/// The outermost decoder level emits raw (pre-activation) values.
template <typename T>
class UNet {
 public:
  UNet(const UNetSpec& spec, Rng& rng);

  /// `dropout_rng` is null when no noise is injected.
  Tensor<T> forward(const Tensor<T>& x, Mode mode, const NoiseConfig& noise, Rng* dropout_rng);

  void collect(const std::string& prefix, std::vector<NamedParameter<T>>& out) const;
  void collect_buffers(const std::string& prefix, std::vector<NamedBuffer<T>>& out);
  const UNetSpec& spec() const { return spec_; }

 private:
  struct Down {
    Conv2d<T> conv;
    std::optional<BatchNorm2d<T>> norm;
  };
  struct Up {
    ConvTranspose2d<T> deconv;
    std::optional<BatchNorm2d<T>> norm;
  };

  UNetSpec spec_;
  std::vector<Down> down_;  // level 1..depth
  std::vector<Up> up_;      // level 1..depth
};

template <typename T>
struct GeneratorOutput {
  Tensor<T> final;
  std::vector<Tensor<T>> heads;  // one per U-Net, in stack order
};

/// Three stacked U-Nets. Every head is mapped to [0, 1] by (tanh + 1) / 2 and
/// the final output is the arithmetic mean of the supervised heads.
template <typename T>
class Generator {
 public:
  Generator(const GeneratorSpec& spec, Rng& rng);

  GeneratorOutput<T> forward(const Tensor<T>& x, Mode mode, Rng* noise_rng);

  std::vector<NamedParameter<T>> parameters() const;
  std::vector<NamedBuffer<T>> buffers();
  const GeneratorSpec& spec() const { return spec_; }

 private:
  GeneratorSpec spec_;
  std::vector<UNet<T>> unets_;
};

struct TapDims {
  Index width = 0, height = 0, depth = 0;
  friend bool operator==(const TapDims&, const TapDims&) = default;
};

template <typename T>
struct DiscriminatorOutput {
  Tensor<T> logits;  // [N], no sigmoid
  std::vector<Tensor<T>> taps;
  std::vector<TapDims> tap_dims;
};

/// Image-level discriminator on [x, y] concatenated along channels:
/// Convolution-BatchNorm-LeakyReLU blocks, global average pooling, linear logit.
template <typename T>
class Discriminator {
 public:
  Discriminator(const DiscriminatorSpec& spec, Rng& rng);

  DiscriminatorOutput<T> forward(const Tensor<T>& x, const Tensor<T>& y, Mode mode);

  std::vector<NamedParameter<T>> parameters() const;
  std::vector<NamedBuffer<T>> buffers();
  const DiscriminatorSpec& spec() const { return spec_; }

 private:
  struct Block {
    Conv2d<T> conv;
    BatchNorm2d<T> norm;
  };

  DiscriminatorSpec spec_;
  std::vector<Block> blocks_;
  std::optional<Linear<T>> head_;
};

void set_requires_grad(const std::vector<NamedParameter<float>>& params, bool on);
void set_requires_grad(const std::vector<NamedParameter<double>>& params, bool on);

extern template class UNet<float>;
extern template class UNet<double>;
extern template class Generator<float>;
extern template class Generator<double>;
extern template class Discriminator<float>;
extern template class Discriminator<double>;

}  // namespace hmap
