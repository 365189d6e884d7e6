#include "hmap/models/networks.hpp"

#include <string>

namespace hmap {

namespace {

constexpr double kLeakySlope = 0.2;
constexpr ops::ConvGeometry kDown{2, 1};  // 4x4 kernel halves the extent
constexpr Index kUpKernel = 4;

template <typename T>
Tensor<T> apply_dropout(const Tensor<T>& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  Array<T> mask(x.shape());
  std::bernoulli_distribution keep(1.0 - rate);
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& m : mask.values()) m = keep(rng) ? scale : T(0);
  return ops::mul_constant(x, mask);
}

}  // namespace

template <typename T>
UNet<T>::UNet(const UNetSpec& spec, Rng& rng) : spec_(spec) {
  spec_.validate();
  Index in = spec.in_channels;
  for (Index level = 1; level <= spec.depth; ++level) {
    const Index out = spec.channels_at(level);
    Down d{Conv2d<T>(in, out, 4, kDown, rng, level == 1), std::nullopt};
    if (level > 1) d.norm.emplace(out, rng);
    down_.push_back(std::move(d));
    in = out;
  }
  for (Index level = 1; level <= spec.depth; ++level) {
    const Index from_below = spec.channels_at(level);
    const Index dec_in = level == spec.depth ? from_below : 2 * from_below;
    const Index dec_out = level == 1 ? spec.out_channels : spec.channels_at(level - 1);
    Up u{ConvTranspose2d<T>(dec_in, dec_out, kUpKernel, kDown, rng, level == 1), std::nullopt};
    if (level > 1) u.norm.emplace(dec_out, rng);
    up_.push_back(std::move(u));
  }
}

template <typename T>
Tensor<T> UNet<T>::forward(const Tensor<T>& x, Mode mode, const NoiseConfig& noise, Rng* dropout_rng) {
  const Index depth = spec_.depth;
  std::vector<Tensor<T>> skips;
  skips.reserve(static_cast<std::size_t>(depth));
  Tensor<T> h = x;
  for (Index level = 1; level <= depth; ++level) {
    Down& d = down_[static_cast<std::size_t>(level - 1)];
    h = d.conv.forward(h);
    if (d.norm) h = d.norm->forward(h, mode);
    h = ops::leaky_relu(h, T(kLeakySlope));
    skips.push_back(h);
  }
  const bool noisy = noise.mode == NoiseMode::dropout && dropout_rng != nullptr;
  for (Index level = depth; level >= 1; --level) {
    Up& u = up_[static_cast<std::size_t>(level - 1)];
    Tensor<T> in = level == depth ? skips.back() : ops::concat<T>({h, skips[static_cast<std::size_t>(level - 1)]}, 1);
    h = u.deconv.forward(in);
    if (level == 1) break;
    if (u.norm) h = u.norm->forward(h, mode);
    h = ops::leaky_relu(h, T(0));
    if (noisy && level > depth - noise.levels) h = apply_dropout(h, noise.rate, *dropout_rng);
  }
  return h;
}

template <typename T>
void UNet<T>::collect(const std::string& prefix, std::vector<NamedParameter<T>>& out) const {
  for (std::size_t i = 0; i < down_.size(); ++i) {
    const std::string p = prefix + ".down" + std::to_string(i + 1);
    down_[i].conv.collect(p + ".conv", out);
    if (down_[i].norm) down_[i].norm->collect(p + ".norm", out);
  }
  for (std::size_t i = 0; i < up_.size(); ++i) {
    const std::string p = prefix + ".up" + std::to_string(i + 1);
    up_[i].deconv.collect(p + ".deconv", out);
    if (up_[i].norm) up_[i].norm->collect(p + ".norm", out);
  }
}

template <typename T>
void UNet<T>::collect_buffers(const std::string& prefix, std::vector<NamedBuffer<T>>& out) {
  for (std::size_t i = 0; i < down_.size(); ++i) {
    if (down_[i].norm) down_[i].norm->collect_buffers(prefix + ".down" + std::to_string(i + 1) + ".norm", out);
  }
  for (std::size_t i = 0; i < up_.size(); ++i) {
    if (up_[i].norm) up_[i].norm->collect_buffers(prefix + ".up" + std::to_string(i + 1) + ".norm", out);
  }
}

template <typename T>
Generator<T>::Generator(const GeneratorSpec& spec, Rng& rng) : spec_(spec) {
  spec_.validate();
  for (const auto& u : spec_.unets) unets_.emplace_back(u, rng);
}

template <typename T>
GeneratorOutput<T> Generator<T>::forward(const Tensor<T>& x, Mode mode, Rng* noise_rng) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("generator input must be NCHW, got " + to_string(s));
  if (s[1] != spec_.image_channels) {
    throw ShapeError("generator input channels (dimension 1) " + std::to_string(s[1]) + " != " +
                     std::to_string(spec_.image_channels));
  }
  const Index divisor = spec_.resolution_divisor();
  for (int axis : {2, 3}) {
    if (s[axis] % divisor != 0 || s[axis] == 0) {
      throw ShapeError("generator input " + std::string(axis == 2 ? "height " : "width ") + std::to_string(s[axis]) +
                       " is not divisible by " + std::to_string(divisor) + " (2^depth)");
    }
  }
  GeneratorOutput<T> out;
  Tensor<T> previous;
  for (std::size_t k = 0; k < unets_.size(); ++k) {
    Tensor<T> in = k == 0 ? x : ops::concat<T>({x, previous}, 1);
    Tensor<T> raw = unets_[k].forward(in, mode, spec_.noise, noise_rng);
    Tensor<T> head = ops::add_scalar(ops::mul_scalar(ops::tanh(raw), T(0.5)), T(0.5));
    out.heads.push_back(head);
    previous = head;
  }
  Tensor<T> acc = out.heads[static_cast<std::size_t>(spec_.supervised_heads[0])];
  for (std::size_t i = 1; i < spec_.supervised_heads.size(); ++i) {
    acc = ops::add(acc, out.heads[static_cast<std::size_t>(spec_.supervised_heads[i])]);
  }
  out.final = ops::mul_scalar(acc, T(1) / static_cast<T>(spec_.supervised_heads.size()));
  return out;
}

template <typename T>
std::vector<NamedParameter<T>> Generator<T>::parameters() const {
  std::vector<NamedParameter<T>> out;
  for (std::size_t k = 0; k < unets_.size(); ++k) unets_[k].collect("gen.unet" + std::to_string(k), out);
  return out;
}

template <typename T>
std::vector<NamedBuffer<T>> Generator<T>::buffers() {
  std::vector<NamedBuffer<T>> out;
  for (std::size_t k = 0; k < unets_.size(); ++k) unets_[k].collect_buffers("gen.unet" + std::to_string(k), out);
  return out;
}

template <typename T>
Discriminator<T>::Discriminator(const DiscriminatorSpec& spec, Rng& rng) : spec_(spec) {
  spec_.validate();
  Index in = spec_.in_channels;
  for (std::size_t i = 0; i < spec_.layer_channels.size(); ++i) {
    const Index out = spec_.layer_channels[i];
    const ops::ConvGeometry geom{i % 2 == 0 ? 2 : 1, 1};  // blocks 1, 3, 5, ... downsample
    Conv2d<T> conv(in, out, 3, geom, rng, false);
    BatchNorm2d<T> norm(out, rng);
    blocks_.push_back(Block{std::move(conv), std::move(norm)});
    in = out;
  }
  head_.emplace(in, 1, rng);
}

template <typename T>
DiscriminatorOutput<T> Discriminator<T>::forward(const Tensor<T>& x, const Tensor<T>& y, Mode mode) {
  const Shape& xs = x.shape();
  const Shape& ys = y.shape();
  if (xs.size() != 4 || ys.size() != 4) throw ShapeError("discriminator inputs must be NCHW");
  if (xs[0] != ys[0]) throw ShapeError("discriminator: batch mismatch (dimension 0) between x and y");
  if (xs[2] != ys[2] || xs[3] != ys[3]) {
    throw ShapeError("discriminator: spatial mismatch between x " + to_string(xs) + " and y " + to_string(ys));
  }
  if (xs[1] + ys[1] != spec_.in_channels) {
    throw ShapeError("discriminator: concatenated channels (dimension 1) " + std::to_string(xs[1] + ys[1]) +
                     " != " + std::to_string(spec_.in_channels));
  }
  DiscriminatorOutput<T> out;
  Tensor<T> h = ops::concat<T>({x, y}, 1);
  std::size_t next_tap = 0;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    h = blocks_[i].conv.forward(h);
    h = blocks_[i].norm.forward(h, mode);
    h = ops::leaky_relu(h, T(kLeakySlope));
    if (next_tap < spec_.tap_layers.size() && spec_.tap_layers[next_tap] == static_cast<int>(i + 1)) {
      out.taps.push_back(h);
      out.tap_dims.push_back(TapDims{h.dim(3), h.dim(2), h.dim(1)});
      ++next_tap;
    }
  }
  Tensor<T> pooled = ops::global_avg_pool2d(h);
  out.logits = ops::reshape(head_->forward(pooled), Shape{xs[0]});
  return out;
}

template <typename T>
std::vector<NamedParameter<T>> Discriminator<T>::parameters() const {
  std::vector<NamedParameter<T>> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = "disc.block" + std::to_string(i + 1);
    blocks_[i].conv.collect(p + ".conv", out);
    blocks_[i].norm.collect(p + ".norm", out);
  }
  head_->collect("disc.head", out);
  return out;
}

template <typename T>
std::vector<NamedBuffer<T>> Discriminator<T>::buffers() {
  std::vector<NamedBuffer<T>> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].norm.collect_buffers("disc.block" + std::to_string(i + 1) + ".norm", out);
  }
  return out;
}

void set_requires_grad(const std::vector<NamedParameter<float>>& params, bool on) {
  for (auto p : params) p.tensor.set_requires_grad(on);
}

void set_requires_grad(const std::vector<NamedParameter<double>>& params, bool on) {
  for (auto p : params) p.tensor.set_requires_grad(on);
}

template class UNet<float>;
template class UNet<double>;
template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;

}  // namespace hmap
