#include "hmap/train/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace hmap {

using nlohmann::json;

std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

namespace {

Precision parse_precision(const std::string& s, const std::string& path) {
  if (s == "f32") return Precision::f32;
  if (s == "f64") return Precision::f64;
  throw ConfigError(path + ": expected \"f32\" or \"f64\", got \"" + s + "\"");
}

NoiseMode parse_noise_mode(const std::string& s, const std::string& path) {
  if (s == "dropout") return NoiseMode::dropout;
  if (s == "none") return NoiseMode::none;
  throw ConfigError(path + ": expected \"dropout\" or \"none\", got \"" + s + "\"");
}

// Reads one JSON object, remembering which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config section '" + path_ + "' must be an object");
  }

  const json& raw(const std::string& key) {
    const std::string full = path_.empty() ? key : path_ + "." + key;
    const auto it = j_.find(key);
    if (it == j_.end()) throw ConfigError("missing config key '" + full + "'");
    seen_.insert(key);
    return *it;
  }

  template <typename V>
  V get(const std::string& key) {
    const json& v = raw(key);
    try {
      return v.get<V>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + child(key) + "' has the wrong type");
    }
  }

  Section section(const std::string& key) { return Section(raw(key), child(key)); }
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + child(key) + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

void TrainConfig::validate() const {
  if (!(lr0 > 0)) throw ConfigError("train.lr0 must be positive");
  if (!(decay > 0 && decay <= 1)) throw ConfigError("train.decay must lie in (0, 1]");
  if (decay_every < 1) throw ConfigError("train.decay_every must be positive");
  if (batch_size < 1) throw ConfigError("train.batch_size must be positive");
  if (epochs < 1) throw ConfigError("train.epochs must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw ConfigError("train.adam_betas must lie in [0, 1)");
  }
  if (d_steps < 1) throw ConfigError("train.d_steps must be positive");
  if (resolution < 1) throw ConfigError("train.resolution must be positive");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be non-negative");
}

double lr_schedule(Index epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw ConfigError("lr_schedule: epoch must be non-negative");
  return cfg.lr0 * std::pow(cfg.decay, static_cast<double>(epoch / cfg.decay_every));
}

void RunConfig::validate() const {
  train.validate();
  generator.validate();
  discriminator.validate();
  loss.validate(discriminator.tap_layers.size());
  if (generator.image_channels + generator.height_channels != discriminator.in_channels) {
    throw ConfigError("discriminator input channels must equal image plus heightmap channels");
  }
  const Index div = generator.resolution_divisor();
  if (train.resolution % div != 0) {
    throw ConfigError("train.resolution " + std::to_string(train.resolution) + " is not divisible by " +
                      std::to_string(div) + " (2^depth)");
  }
}

json to_json(const RunConfig& c) {
  const UNetSpec& u = c.generator.unets[0];
  return {
      {"train",
       {{"lr0", c.train.lr0},
        {"decay", c.train.decay},
        {"decay_every", c.train.decay_every},
        {"batch_size", c.train.batch_size},
        {"epochs", c.train.epochs},
        {"adam_betas", {c.train.beta1, c.train.beta2}},
        {"d_steps", c.train.d_steps},
        {"seed", c.train.seed},
        {"resolution", c.train.resolution},
        {"checkpoint_every", c.train.checkpoint_every},
        {"precision", to_string(c.train.precision)}}},
      {"loss",
       {{"lambda", c.loss.lambda_per_tap},
        {"alpha_perceptual", c.loss.alpha_perceptual},
        {"alpha_l2", c.loss.alpha_l2},
        {"alpha_adv", c.loss.alpha_adv},
        {"per_head", c.loss_per_head}}},
      {"generator",
       {{"depth", u.depth},
        {"base_channels", u.base_channels},
        {"max_channels", u.max_channels},
        {"supervised_heads", c.generator.supervised_heads},
        {"noise",
         {{"mode", c.generator.noise.mode == NoiseMode::dropout ? "dropout" : "none"},
          {"rate", c.generator.noise.rate},
          {"levels", c.generator.noise.levels}}}}},
      {"discriminator",
       {{"layer_channels", c.discriminator.layer_channels}, {"tap_layers", c.discriminator.tap_layers}}},
  };
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Section root(j, "");

  Section t = root.section("train");
  c.train.lr0 = t.get<double>("lr0");
  c.train.decay = t.get<double>("decay");
  c.train.decay_every = t.get<Index>("decay_every");
  c.train.batch_size = t.get<Index>("batch_size");
  c.train.epochs = t.get<Index>("epochs");
  const auto betas = t.get<std::vector<double>>("adam_betas");
  if (betas.size() != 2) throw ConfigError("train.adam_betas must hold two values");
  c.train.beta1 = betas[0];
  c.train.beta2 = betas[1];
  c.train.d_steps = t.get<Index>("d_steps");
  c.train.seed = t.get<std::uint64_t>("seed");
  c.train.resolution = t.get<Index>("resolution");
  c.train.checkpoint_every = t.get<Index>("checkpoint_every");
  c.train.precision = parse_precision(t.get<std::string>("precision"), "train.precision");
  t.finish();

  Section l = root.section("loss");
  c.loss.lambda_per_tap = l.get<std::vector<double>>("lambda");
  c.loss.alpha_perceptual = l.get<double>("alpha_perceptual");
  c.loss.alpha_l2 = l.get<double>("alpha_l2");
  c.loss.alpha_adv = l.get<double>("alpha_adv");
  c.loss_per_head = l.get<bool>("per_head");
  l.finish();

  Section g = root.section("generator");
  const auto depth = g.get<Index>("depth");
  const auto base = g.get<Index>("base_channels");
  const auto max = g.get<Index>("max_channels");
  c.generator = GeneratorSpec::make(depth, base, max);
  c.generator.supervised_heads = g.get<std::vector<int>>("supervised_heads");
  Section n = g.section("noise");
  const NoiseMode mode = parse_noise_mode(n.get<std::string>("mode"), "generator.noise.mode");
  const double rate = n.get<double>("rate");
  const Index levels = n.get<Index>("levels");
  n.finish();
  g.finish();
  try {
    c.generator.noise = noise_inject(mode, rate, levels);
  } catch (const Error& e) {
    throw ConfigError(std::string("generator.noise: ") + e.what());
  }

  Section d = root.section("discriminator");
  c.discriminator.layer_channels = d.get<std::vector<Index>>("layer_channels");
  c.discriminator.tap_layers = d.get<std::vector<int>>("tap_layers");
  d.finish();
  root.finish();

  try {
    c.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return c;
}

std::string serialize_config(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace hmap
