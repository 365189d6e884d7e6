#pragma once

#include <array>
#include <vector>

#include "hmap/tensor/array.hpp"

namespace hmap {

/// One encoder-decoder with skip connections. Channel width at level k
/// (1-based) is min(base_channels * 2^(k-1), max_channels).
struct UNetSpec {
  Index depth = 4;
  Index base_channels = 32;
  Index max_channels = 256;
  Index in_channels = 3;
  Index out_channels = 3;

  Index channels_at(Index level) const;
  void validate() const;
  friend bool operator==(const UNetSpec&, const UNetSpec&) = default;
};

enum class NoiseMode { none, dropout };

/// How the generator's noise input z is realized.
struct NoiseConfig {
  NoiseMode mode = NoiseMode::dropout;
  double rate = 0.5;
  /// Number of innermost decoder levels that apply dropout.
  Index levels = 2;

  friend bool operator==(const NoiseConfig&, const NoiseConfig&) = default;
};

/// Validated noise configuration; rejects rates outside [0, 1).
NoiseConfig noise_inject(NoiseMode mode, double rate, Index levels = 2);

struct GeneratorSpec {
  static constexpr int kUNetCount = 3;

  std::array<UNetSpec, kUNetCount> unets;
  /// Heads averaged into the final output; each also receives the losses.
  std::vector<int> supervised_heads{0, 1, 2};
  NoiseConfig noise;
  Index image_channels = 3;
  Index height_channels = 3;

  /// Three identical U-Nets; the 2nd and 3rd consume [image, previous head].
  static GeneratorSpec make(Index depth, Index base_channels, Index max_channels = 256, Index image_channels = 3,
                            Index height_channels = 3);

  Index max_depth() const;
  /// Required divisor of the input's spatial extents.
  Index resolution_divisor() const { return Index{1} << max_depth(); }
  void validate() const;
  friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

struct DiscriminatorSpec {
  Index in_channels = 6;
  /// One entry per Convolution-BatchNorm-LeakyReLU block; odd blocks stride 2.
  std::vector<Index> layer_channels{32, 32, 64, 64, 128, 128, 128, 128};
  /// 1-based block indices whose activations feed the perceptual loss and LPIPS.
  std::vector<int> tap_layers{1, 4, 6, 8};

  void validate() const;
  friend bool operator==(const DiscriminatorSpec&, const DiscriminatorSpec&) = default;
};

}  // namespace hmap
