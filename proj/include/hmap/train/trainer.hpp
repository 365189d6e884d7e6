#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hmap/data/dataset.hpp"
#include "hmap/metrics.hpp"
#include "hmap/models/networks.hpp"
#include "hmap/train/adam.hpp"
#include "hmap/train/config.hpp"

namespace hmap {

struct StepLosses {
  double d = 0.0;
  double g = 0.0;
  double l2 = 0.0;
  double perceptual = 0.0;
  double adversarial = 0.0;
  friend bool operator==(const StepLosses&, const StepLosses&) = default;
};

struct ValidationResult {
  Index count = 0;
  double l2 = 0.0;
  double ssim = 0.0;
  double psnr_db = 0.0;
  double lpips = 0.0;
  double height_mae_um = 0.0;
  friend bool operator==(const ValidationResult&, const ValidationResult&) = default;
};

/// Epochs are 0-based throughout.
struct EpochRecord {
  Index epoch = 0;
  double lr = 0.0;
  Index steps = 0;
  StepLosses train;  // mean over the epoch's steps
  std::optional<ValidationResult> val;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct RunState {
  Index epoch = 0;  // completed epochs; the next epoch to run
  Index global_step = 0;
  double lr_current = 0.0;
  std::vector<EpochRecord> history;
  double best_val_l2 = std::numeric_limits<double>::infinity();
  Index best_epoch = -1;
  std::string best_checkpoint;
  friend bool operator==(const RunState&, const RunState&) = default;
};

nlohmann::json to_json(const RunState& s);
RunState run_state_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EpochRecord& r);

struct StepRecord {
  Index epoch = 0;
  Index step = 0;
  double lr = 0.0;
  StepLosses losses;
};

template <typename T>
struct Batch {
  Tensor<T> x;  // fundus [B, 3, H, W]
  Tensor<T> y;  // encoded heightmap [B, 3, H, W]
  std::vector<std::string> ids;
};

template <typename T>
Batch<T> make_batch(const std::vector<LoadedSample>& samples, const std::vector<std::size_t>& indices);

template <typename T>
struct GeneratorObjective {
  Tensor<T> total;
  StepLosses parts;  // d is left at 0
};

/// Generator loss averaged over the supervised heads (or taken on the final
/// output when loss.per_head is off). The discriminator runs in eval mode and
/// is not frozen here.
template <typename T>
GeneratorObjective<T> generator_objective(const RunConfig& cfg, Discriminator<T>& d, const Batch<T>& batch,
                                          const GeneratorOutput<T>& out);

template <typename T>
class Trainer {
 public:
  explicit Trainer(RunConfig cfg);

  /// Builds a trainer from the configuration stored in a checkpoint and
  /// restores all state from it.
  static std::unique_ptr<Trainer> from_checkpoint(const std::filesystem::path& path);

  /// One discriminator update (repeated d_steps times) then one generator
  /// update. Increments the global step.
  StepLosses train_step(const Batch<T>& batch);

  // The three phases of train_step, exposed for inspection.
  GeneratorOutput<T> generate(const Batch<T>& batch);
  double discriminator_step(const Batch<T>& batch, const GeneratorOutput<T>& out);
  /// Returns {total, l2, perceptual, adversarial} averaged over supervised heads.
  StepLosses generator_step(const Batch<T>& batch, const GeneratorOutput<T>& out);

  EpochRecord train_epoch(const std::vector<LoadedSample>& train, const std::vector<LoadedSample>& val,
                          const std::function<void(const StepRecord&)>& on_step = {});

  /// Eval-mode generator with a fixed noise stream; pure function of the
  /// weights and the sample order.
  ValidationResult validate(const std::vector<LoadedSample>& val);
  std::vector<metrics::NamedMetrics> evaluate(const std::vector<LoadedSample>& samples);

  /// Eval-mode prediction for x [N, 3, H, W]. `noise_rng` may be null.
  Array<T> predict(const Array<T>& x, Rng* noise_rng);

  void save(const std::filesystem::path& path);
  /// Validates the whole file before assigning anything.
  void restore(const std::filesystem::path& path);

  const RunConfig& config() const { return cfg_; }
  /// Training-schedule fields may change between runs; model specs may not.
  void set_train_config(const TrainConfig& t);
  RunState& state() { return state_; }
  const RunState& state() const { return state_; }
  Generator<T>& generator() { return g_; }
  Discriminator<T>& discriminator() { return d_; }
  Adam<T>& generator_optimizer() { return g_opt_; }
  Adam<T>& discriminator_optimizer() { return d_opt_; }

 private:
  Trainer(RunConfig cfg, Rng&& init_rng);

  Rng validation_rng() const;
  Tensor<T> check_finite(const Tensor<T>& loss, const char* what, const Batch<T>& batch) const;

  RunConfig cfg_;
  Generator<T> g_;
  Discriminator<T> d_;
  Adam<T> g_opt_;
  Adam<T> d_opt_;
  RunState state_;
};

/// Runs epochs until state().epoch reaches the configured total. Writes into
/// `run_dir`: config.json, train_log.jsonl (one record per step plus one per
/// epoch), checkpoints/{epoch_NNNN,best,last}.ckpt and final_metrics.json.
template <typename T>
void fit(Trainer<T>& trainer, const std::vector<LoadedSample>& train, const std::vector<LoadedSample>& val,
         const std::filesystem::path& run_dir, const std::function<void(const EpochRecord&)>& on_epoch = {});

nlohmann::json to_json(const metrics::ImageMetrics& m);
nlohmann::json report_json(const std::vector<metrics::NamedMetrics>& rows);

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace hmap
