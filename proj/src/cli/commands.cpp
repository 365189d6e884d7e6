#include "hmap/cli/commands.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <ostream>

#include "hmap/data/dataset.hpp"
#include "hmap/data/image_io.hpp"
#include "hmap/seed.hpp"
#include "hmap/train/checkpoint.hpp"
#include "hmap/train/trainer.hpp"

namespace hmap::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kInferTag = 0x1afe;

void require_supported_resolution(std::int64_t r) {
  if (r != 32 && r != 64 && r != 128 && r != 256) {
    throw ConfigError(fmt::format("resolution {} is not supported; expected one of 32, 64, 128, 256", r));
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw Error("write failed (disk full?): " + path.string());
}

std::string fmt_metric(double v, int precision) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.{}f}", v, precision);
}

std::uint8_t checkpoint_scalar_bytes(const fs::path& ckpt) { return read_checkpoint_header(ckpt).scalar_bytes; }

template <typename T>
void train_with(const RunConfig& cfg, const TrainOptions& opt, const DatasetManifest& manifest, std::ostream& log) {
  std::unique_ptr<Trainer<T>> trainer;
  if (opt.resume) {
    trainer = Trainer<T>::from_checkpoint(*opt.resume);
    if (opt.config) {
      if (cfg.generator != trainer->config().generator || cfg.discriminator != trainer->config().discriminator) {
        throw CheckpointError(CheckpointError::Kind::spec_mismatch,
                              "config model spec differs from the checkpoint " + opt.resume->string());
      }
      trainer->set_train_config(cfg.train);
    }
    if (opt.epochs) {
      TrainConfig t = trainer->config().train;
      t.epochs = *opt.epochs;
      trainer->set_train_config(t);
    }
    fmt::print(log, "resuming from {} at epoch {} (step {})\n", opt.resume->string(), trainer->state().epoch,
               trainer->state().global_step);
  } else {
    trainer = std::make_unique<Trainer<T>>(cfg);
  }
  if (manifest.resolution != trainer->config().train.resolution) {
    throw ConfigError(fmt::format("dataset resolution {} differs from train.resolution {}", manifest.resolution,
                                  trainer->config().train.resolution));
  }
  const fs::path data = opt.data;
  const auto train = load_split(data, manifest, Split::train);
  const auto val = load_split(data, manifest, Split::val);
  if (train.empty()) throw DataError("dataset has no training samples");
  const fs::path run_dir = output_path(opt.out);
  fmt::print(log, "training on {} pairs, validating on {} ({} epochs, {} precision) -> {}\n", train.size(),
             val.size(), trainer->config().train.epochs, to_string(trainer->config().train.precision),
             run_dir.string());
  fit(*trainer, train, val, run_dir, [&](const EpochRecord& r) {
    fmt::print(log, "epoch {:4d}  lr {:.3e}  L_D {:.4f}  L_G {:.4f}  L2 {:.5f}", r.epoch, r.lr, r.train.d, r.train.g,
               r.train.l2);
    if (r.val) fmt::print(log, "  val L2 {:.5f}  SSIM {:.4f}", r.val->l2, r.val->ssim);
    fmt::print(log, "\n");
    log.flush();
  });
  const RunState& st = trainer->state();
  if (st.best_epoch >= 0) fmt::print(log, "best val L2 {:.5f} at epoch {}\n", st.best_val_l2, st.best_epoch);
}

template <typename T>
void infer_with(const InferOptions& opt, const Image& fundus, std::ostream& log) {
  auto trainer = Trainer<T>::from_checkpoint(opt.ckpt);
  const Index res = trainer->config().train.resolution;
  if (fundus.dim(1) != res || fundus.dim(2) != res) {
    throw ShapeError(fmt::format("input is {}x{} but the checkpoint was trained at {}x{}", fundus.dim(2),
                                 fundus.dim(1), res, res));
  }
  Rng rng(derive_seed(opt.seed, {kInferTag}));
  const Array<T> x = fundus.cast<T>().reshaped(Shape{1, 3, res, res});
  const Image pred = quantize8(trainer->predict(x, &rng).template cast<float>().reshaped(Shape{3, res, res}));

  const fs::path png = output_path(opt.out);
  if (png.has_parent_path()) fs::create_directories(png.parent_path());
  write_png(png, pred);
  const HeightField h = decode_height(pred);
  std::string csv;
  for (Index i = 0; i < h.height(); ++i) {
    for (Index j = 0; j < h.width(); ++j) {
      if (j) csv += ',';
      csv += fmt::format("{:.4f}", h.heights[i * h.width() + j]);
    }
    csv += '\n';
  }
  fs::path csv_path = png;
  csv_path.replace_extension(".csv");
  write_text(csv_path, csv);
  double mean = 0.0;
  for (Index i = 0; i < h.heights.size(); ++i) mean += h.heights[i];
  fmt::print(log, "wrote {} and {} (mean height {:.2f} um)\n", png.string(), csv_path.string(),
             mean / static_cast<double>(h.heights.size()));
}

template <typename T>
std::vector<metrics::NamedMetrics> evaluate_with(const EvaluateOptions& opt, const std::vector<LoadedSample>& samples) {
  auto trainer = Trainer<T>::from_checkpoint(opt.ckpt);
  const Index res = trainer->config().train.resolution;
  if (samples.front().fundus.dim(1) != res || samples.front().fundus.dim(2) != res) {
    throw ShapeError(fmt::format("dataset resolution differs from the checkpoint's {}", res));
  }
  if (!opt.ground_truth) return trainer->evaluate(samples);
  std::vector<metrics::NamedMetrics> rows;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Batch<T> b = make_batch<T>(samples, {i});
    const auto m = metrics::batch_metrics(b.y.value(), b.y.value(), b.x.value(), trainer->discriminator());
    rows.push_back({samples[i].id, m[0]});
  }
  return rows;
}

}  // namespace

fs::path output_path(const fs::path& p) {
  const char* root = std::getenv("HMAP_OUTPUT_ROOT");
  if (root == nullptr || *root == '\0' || p.is_absolute()) return p;
  return fs::path(root) / p;
}

void cmd_gen_data(const GenDataOptions& opt, std::ostream& log) {
  if (opt.n < 10) throw ConfigError(fmt::format("--n must be at least 10, got {}", opt.n));
  require_supported_resolution(opt.resolution);
  const fs::path root = output_path(opt.out);
  if (fs::exists(root / kManifestName)) {
    bool same = false;
    try {
      const DatasetManifest m = read_manifest(root);
      same = m.n == opt.n && m.resolution == opt.resolution && m.seed == opt.seed && m.fractions == SplitFractions{} &&
             verify_dataset(root, m);
    } catch (const Error&) {
      same = false;
    }
    if (same && !opt.force) {
      fmt::print(log, "dataset at {} is up to date; nothing to do\n", root.string());
      return;
    }
    if (!opt.force) {
      throw DataError("a different or modified dataset already exists at " + root.string() +
                      "; pass --force to regenerate");
    }
    fs::remove_all(root / "fundus");
    fs::remove_all(root / "height");
    fs::remove(root / kManifestName);
  }
  const DatasetManifest m = synth_dataset(opt.n, opt.resolution, opt.seed, root);
  std::size_t pairs[3] = {0, 0, 0};
  std::size_t bases[3] = {0, 0, 0};
  for (const auto& e : m.entries) {
    ++pairs[static_cast<int>(e.split)];
    if (e.aug == flip_tag(Flip::none)) ++bases[static_cast<int>(e.split)];
  }
  fmt::print(log, "wrote {} pairs ({} base images x 4 flips) at {}x{} to {}\n", m.entries.size(), m.n, m.resolution,
             m.resolution, root.string());
  fmt::print(log, "split train/val/test: {}/{}/{} base images, {}/{}/{} pairs\n", bases[0], bases[1], bases[2],
             pairs[0], pairs[1], pairs[2]);
}

void cmd_train(const TrainOptions& opt, std::ostream& log) {
  RunConfig cfg;
  if (opt.config) cfg = load_config(opt.config->string());
  if (opt.seed) {
    if (opt.resume) throw ConfigError("--seed cannot be combined with --resume; the checkpoint fixes the seed");
    cfg.train.seed = *opt.seed;
  }
  if (opt.epochs && !opt.resume) cfg.train.epochs = *opt.epochs;
  const DatasetManifest manifest = read_manifest(opt.data);
  if (!opt.resume && !opt.config) cfg.train.resolution = manifest.resolution;
  cfg.validate();
  Precision precision = cfg.train.precision;
  if (opt.resume) precision = checkpoint_scalar_bytes(*opt.resume) == 4 ? Precision::f32 : Precision::f64;
  if (precision == Precision::f32) {
    train_with<float>(cfg, opt, manifest, log);
  } else {
    train_with<double>(cfg, opt, manifest, log);
  }
}

void cmd_infer(const InferOptions& opt, std::ostream& log) {
  const Image fundus = read_png(opt.fundus);
  if (fundus.dim(0) != 3) {
    throw DataError(fmt::format("{} has {} channel(s); an RGB fundus image is required", opt.fundus.string(),
                                fundus.dim(0)));
  }
  if (checkpoint_scalar_bytes(opt.ckpt) == 4) {
    infer_with<float>(opt, fundus, log);
  } else {
    infer_with<double>(opt, fundus, log);
  }
}

void cmd_evaluate(const EvaluateOptions& opt, std::ostream& log) {
  const DatasetManifest manifest = read_manifest(opt.data);
  const auto samples = load_split(opt.data, manifest, parse_split(opt.split));
  if (samples.empty()) throw DataError("split '" + opt.split + "' is empty");
  const auto rows = checkpoint_scalar_bytes(opt.ckpt) == 4 ? evaluate_with<float>(opt, samples)
                                                          : evaluate_with<double>(opt, samples);
  const metrics::ImageMetrics agg = metrics::aggregate(rows);

  const fs::path dir = output_path(opt.out);
  fs::create_directories(dir);
  write_text(dir / "metrics.json", report_json(rows).dump(2) + "\n");
  std::string csv = "id,ssim,psnr_db,lpips,mse,height_mae_um\n";
  for (const auto& r : rows) {
    csv += fmt::format("{},{},{},{},{},{}\n", r.id, fmt_metric(r.values.ssim, 6), fmt_metric(r.values.psnr_db, 4),
                       fmt_metric(r.values.lpips, 6), fmt_metric(r.values.mse, 6),
                       fmt_metric(r.values.height_mae_um, 3));
  }
  write_text(dir / "per_image.csv", csv);

  fmt::print(log, "{} split, {} images\n", opt.split, rows.size());
  fmt::print(log, "{:>8} | {:>9} | {:>9} | {:>9} | {:>9}\n", "SSIM", "PSNR(dB)", "LPIPS", "MSE", "MAE(um)");
  fmt::print(log, "{:>8} | {:>9} | {:>9} | {:>9} | {:>9}\n", fmt_metric(agg.ssim, 4), fmt_metric(agg.psnr_db, 4),
             fmt_metric(agg.lpips, 6), fmt_metric(agg.mse, 6), fmt_metric(agg.height_mae_um, 3));
  fmt::print(log, "report written to {}\n", dir.string());
}

void cmd_config(std::ostream& out) { out << serialize_config(RunConfig{}); }

}  // namespace hmap::cli
