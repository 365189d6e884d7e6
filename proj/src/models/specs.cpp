#include "hmap/models/specs.hpp"

#include <algorithm>
#include <string>

#include "hmap/error.hpp"

namespace hmap {

Index UNetSpec::channels_at(Index level) const {
  return std::min(base_channels << (level - 1), max_channels);
}

void UNetSpec::validate() const {
  if (depth < 1) throw ConfigError("unet depth must be >= 1");
  if (depth > 8) throw ConfigError("unet depth must be <= 8");
  if (base_channels < 1 || max_channels < base_channels) {
    throw ConfigError("unet channels: need 1 <= base_channels <= max_channels");
  }
  if (in_channels < 1 || out_channels < 1) throw ConfigError("unet in/out channels must be positive");
}

NoiseConfig noise_inject(NoiseMode mode, double rate, Index levels) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("noise rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (levels < 0) throw ConfigError("noise levels must be >= 0");
  return NoiseConfig{mode, rate, levels};
}

GeneratorSpec GeneratorSpec::make(Index depth, Index base_channels, Index max_channels, Index image_channels,
                                  Index height_channels) {
  GeneratorSpec spec;
  spec.image_channels = image_channels;
  spec.height_channels = height_channels;
  for (int k = 0; k < kUNetCount; ++k) {
    spec.unets[k] = UNetSpec{depth, base_channels, max_channels,
                             k == 0 ? image_channels : image_channels + height_channels, height_channels};
  }
  return spec;
}

Index GeneratorSpec::max_depth() const {
  Index d = 0;
  for (const auto& u : unets) d = std::max(d, u.depth);
  return d;
}

void GeneratorSpec::validate() const {
  for (int k = 0; k < kUNetCount; ++k) {
    const auto& u = unets[k];
    u.validate();
    const Index want_in = k == 0 ? image_channels : image_channels + height_channels;
    if (u.in_channels != want_in) {
      throw ConfigError("unet " + std::to_string(k) + " must take " + std::to_string(want_in) + " input channels");
    }
    if (u.out_channels != height_channels) {
      throw ConfigError("unet " + std::to_string(k) + " must emit " + std::to_string(height_channels) + " channels");
    }
  }
  if (supervised_heads.empty()) throw ConfigError("at least one supervised head is required");
  for (std::size_t i = 0; i < supervised_heads.size(); ++i) {
    const int h = supervised_heads[i];
    if (h < 0 || h >= kUNetCount) throw ConfigError("supervised head index out of range: " + std::to_string(h));
    if (i > 0 && h <= supervised_heads[i - 1]) throw ConfigError("supervised heads must be strictly increasing");
  }
  noise_inject(noise.mode, noise.rate, noise.levels);
}

void DiscriminatorSpec::validate() const {
  if (in_channels < 1) throw ConfigError("discriminator in_channels must be positive");
  if (layer_channels.empty()) throw ConfigError("discriminator needs at least one block");
  for (Index c : layer_channels) {
    if (c < 1) throw ConfigError("discriminator block widths must be positive");
  }
  const int blocks = static_cast<int>(layer_channels.size());
  for (std::size_t i = 0; i < tap_layers.size(); ++i) {
    const int t = tap_layers[i];
    if (t < 1 || t > blocks) {
      throw ConfigError("tap layer " + std::to_string(t) + " is not a block index in [1, " + std::to_string(blocks) +
                        "]");
    }
    if (i > 0 && t <= tap_layers[i - 1]) throw ConfigError("tap layers must be strictly increasing");
  }
}

}  // namespace hmap
