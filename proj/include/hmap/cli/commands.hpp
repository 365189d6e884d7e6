#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace hmap::cli {

/// Relative output paths are placed under $HMAP_OUTPUT_ROOT when it is set.
std::filesystem::path output_path(const std::filesystem::path& p);

struct GenDataOptions {
  std::int64_t n = 50;
  std::int64_t resolution = 64;
  std::uint64_t seed = 0;
  std::filesystem::path out;
  bool force = false;
};

struct TrainOptions {
  std::filesystem::path data;
  std::filesystem::path out;
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> resume;
  std::optional<std::int64_t> epochs;
  std::optional<std::uint64_t> seed;
};

struct InferOptions {
  std::filesystem::path ckpt;
  std::filesystem::path fundus;
  std::filesystem::path out;  // PNG; the height grid goes next to it as .csv
  std::uint64_t seed = 0;
};

struct EvaluateOptions {
  std::filesystem::path ckpt;
  std::filesystem::path data;
  std::string split = "test";
  std::filesystem::path out;
  /// Scores the ground truth against itself instead of the generator output.
  bool ground_truth = false;
};

// Each command throws hmap::Error on failure and reports progress to `log`.
void cmd_gen_data(const GenDataOptions& opt, std::ostream& log);
void cmd_train(const TrainOptions& opt, std::ostream& log);
void cmd_infer(const InferOptions& opt, std::ostream& log);
void cmd_evaluate(const EvaluateOptions& opt, std::ostream& log);
/// Writes the default configuration.
void cmd_config(std::ostream& out);

}  // namespace hmap::cli
