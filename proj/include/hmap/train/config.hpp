#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "hmap/losses.hpp"
#include "hmap/models/specs.hpp"
#include "hmap/train/adam.hpp"

namespace hmap {

enum class Precision { f32, f64 };

std::string to_string(Precision p);

struct TrainConfig {
  double lr0 = 1e-3;
  double decay = 0.9;
  Index decay_every = 30;  // epochs
  Index batch_size = 8;
  Index epochs = 250;
  double beta1 = 0.5;
  double beta2 = 0.999;
  /// Discriminator updates per generator update.
  Index d_steps = 1;
  std::uint64_t seed = 0;
  Index resolution = 64;
  /// Periodic checkpoint interval in epochs; 0 keeps only best and last.
  Index checkpoint_every = 10;
  Precision precision = Precision::f32;

  AdamOptions adam() const { return {beta1, beta2, 1e-8}; }
  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// lr0 * decay^floor(epoch / decay_every)
double lr_schedule(Index epoch, const TrainConfig& cfg);

struct RunConfig {
  TrainConfig train;
  LossWeights loss;
  /// When false the objective is applied to the averaged output only.
  bool loss_per_head = true;
  GeneratorSpec generator = GeneratorSpec::make(4, 32, 256);
  DiscriminatorSpec discriminator;

  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Every key must be present and no unknown key may appear; errors name the
/// full key path.
RunConfig run_config_from_json(const nlohmann::json& j);

std::string serialize_config(const RunConfig& cfg);
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

}  // namespace hmap
