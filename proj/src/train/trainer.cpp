#include "hmap/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "hmap/seed.hpp"
#include "hmap/train/checkpoint.hpp"

namespace hmap {

namespace fs = std::filesystem;
using nlohmann::json;
using Kind = CheckpointError::Kind;

namespace {

constexpr std::uint64_t kInitTag = 0x1a17;
constexpr std::uint64_t kShuffleTag = 0x5f0e;
constexpr std::uint64_t kNoiseTag = 0x2015e;
constexpr std::uint64_t kValidationTag = 0x7a11d;

json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double number_from(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw Error("expected a number, got \"" + s + "\"");
  }
  return j.get<double>();
}

json to_json(const StepLosses& s) {
  return {{"d", number(s.d)},
          {"g", number(s.g)},
          {"l2", number(s.l2)},
          {"perceptual", number(s.perceptual)},
          {"adversarial", number(s.adversarial)}};
}

StepLosses step_losses_from(const json& j) {
  return {number_from(j.at("d")), number_from(j.at("g")), number_from(j.at("l2")), number_from(j.at("perceptual")),
          number_from(j.at("adversarial"))};
}

json to_json(const ValidationResult& v) {
  return {{"count", v.count},         {"l2", number(v.l2)},       {"ssim", number(v.ssim)},
          {"psnr_db", number(v.psnr_db)}, {"lpips", number(v.lpips)}, {"height_mae_um", number(v.height_mae_um)}};
}

ValidationResult validation_from(const json& j) {
  return {j.at("count").get<Index>(),        number_from(j.at("l2")),    number_from(j.at("ssim")),
          number_from(j.at("psnr_db")),      number_from(j.at("lpips")), number_from(j.at("height_mae_um"))};
}

ValidationResult summarize(const std::vector<metrics::NamedMetrics>& rows) {
  const metrics::ImageMetrics a = metrics::aggregate(rows);
  return {static_cast<Index>(rows.size()), a.mse, a.ssim, a.psnr_db, a.lpips, a.height_mae_um};
}

std::string join_ids(const std::vector<std::string>& ids) {
  std::string s;
  for (const auto& id : ids) s += (s.empty() ? "" : ", ") + id;
  return s;
}

// Restores requires_grad on discriminator parameters even if the G step throws.
template <typename T>
class FreezeGuard {
 public:
  explicit FreezeGuard(std::vector<NamedParameter<T>> params) : params_(std::move(params)) {
    set_requires_grad(params_, false);
  }
  ~FreezeGuard() { set_requires_grad(params_, true); }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<NamedParameter<T>> params_;
};

template <typename T>
std::vector<const Array<T>*> match_entries(const NamedArrays<T>& stored, const std::vector<std::string>& names,
                                           const std::vector<Shape>& shapes, const std::string& what) {
  std::map<std::string, const Array<T>*> by_name;
  for (const auto& [name, a] : stored) by_name[name] = &a;
  if (by_name.size() != stored.size()) throw CheckpointError(Kind::corrupt, what + ": duplicate entry names");
  std::vector<const Array<T>*> out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto it = by_name.find(names[i]);
    if (it == by_name.end()) throw CheckpointError(Kind::missing_entry, what + ": missing entry '" + names[i] + "'");
    if (it->second->shape() != shapes[i]) {
      throw CheckpointError(Kind::spec_mismatch, what + ": entry '" + names[i] + "' has shape " +
                                                     to_string(it->second->shape()) + ", expected " + to_string(shapes[i]));
    }
    out.push_back(it->second);
  }
  if (stored.size() != names.size()) throw CheckpointError(Kind::spec_mismatch, what + ": unexpected extra entries");
  return out;
}

template <typename T>
NamedArrays<T> param_arrays(const std::vector<NamedParameter<T>>& params) {
  NamedArrays<T> out;
  for (const auto& p : params) out.emplace_back(p.name, p.tensor.value());
  return out;
}

template <typename T>
NamedArrays<T> buffer_arrays(const std::vector<NamedBuffer<T>>& buffers) {
  NamedArrays<T> out;
  for (const auto& b : buffers) out.emplace_back(b.name, *b.array);
  return out;
}

template <typename T>
std::vector<AdamEntry<T>> adam_entries(const Adam<T>& opt) {
  std::vector<AdamEntry<T>> out;
  for (std::size_t i = 0; i < opt.parameters().size(); ++i) {
    const auto& p = opt.parameters()[i];
    const auto& s = opt.states()[i];
    AdamEntry<T> e{p.name, s.step, s.m, s.v};
    if (e.m.size() == 0) e.m = Array<T>(p.tensor.shape());
    if (e.v.size() == 0) e.v = Array<T>(p.tensor.shape());
    out.push_back(std::move(e));
  }
  return out;
}

template <typename T>
struct StagedParams {
  std::vector<std::string> names;
  std::vector<Shape> shapes;
};

template <typename T>
StagedParams<T> layout(const std::vector<NamedParameter<T>>& params) {
  StagedParams<T> s;
  for (const auto& p : params) {
    s.names.push_back(p.name);
    s.shapes.push_back(p.tensor.shape());
  }
  return s;
}

template <typename T>
StagedParams<T> layout(const std::vector<NamedBuffer<T>>& buffers) {
  StagedParams<T> s;
  for (const auto& b : buffers) {
    s.names.push_back(b.name);
    s.shapes.push_back(b.array->shape());
  }
  return s;
}

template <typename T>
std::vector<const AdamEntry<T>*> match_adam(const std::vector<AdamEntry<T>>& stored, const StagedParams<T>& want,
                                            const std::string& what) {
  std::map<std::string, const AdamEntry<T>*> by_name;
  for (const auto& e : stored) by_name[e.name] = &e;
  std::vector<const AdamEntry<T>*> out;
  for (std::size_t i = 0; i < want.names.size(); ++i) {
    const auto it = by_name.find(want.names[i]);
    if (it == by_name.end()) {
      throw CheckpointError(Kind::missing_entry, what + ": missing optimizer state for '" + want.names[i] + "'");
    }
    if (it->second->m.shape() != want.shapes[i] || it->second->v.shape() != want.shapes[i] || it->second->step < 0) {
      throw CheckpointError(Kind::spec_mismatch, what + ": optimizer state for '" + want.names[i] + "' has wrong shape");
    }
    out.push_back(it->second);
  }
  if (stored.size() != want.names.size()) throw CheckpointError(Kind::spec_mismatch, what + ": unexpected extra entries");
  return out;
}

}  // namespace

json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"lr", r.lr},
          {"steps", r.steps},
          {"train", to_json(r.train)},
          {"val", r.val ? to_json(*r.val) : json(nullptr)}};
}

json to_json(const RunState& s) {
  json history = json::array();
  for (const auto& r : s.history) history.push_back(to_json(r));
  return {{"epoch", s.epoch},
          {"global_step", s.global_step},
          {"lr_current", s.lr_current},
          {"history", history},
          {"best_val_l2", number(s.best_val_l2)},
          {"best_epoch", s.best_epoch},
          {"best_checkpoint", s.best_checkpoint}};
}

RunState run_state_from_json(const json& j) {
  RunState s;
  s.epoch = j.at("epoch").get<Index>();
  s.global_step = j.at("global_step").get<Index>();
  s.lr_current = j.at("lr_current").get<double>();
  for (const auto& r : j.at("history")) {
    EpochRecord e;
    e.epoch = r.at("epoch").get<Index>();
    e.lr = r.at("lr").get<double>();
    e.steps = r.at("steps").get<Index>();
    e.train = step_losses_from(r.at("train"));
    if (!r.at("val").is_null()) e.val = validation_from(r.at("val"));
    s.history.push_back(e);
  }
  s.best_val_l2 = number_from(j.at("best_val_l2"));
  s.best_epoch = j.at("best_epoch").get<Index>();
  s.best_checkpoint = j.at("best_checkpoint").get<std::string>();
  return s;
}

json to_json(const metrics::ImageMetrics& m) {
  return {{"ssim", number(m.ssim)},
          {"psnr_db", number(m.psnr_db)},
          {"lpips", number(m.lpips)},
          {"mse", number(m.mse)},
          {"height_mae_um", number(m.height_mae_um)}};
}

json report_json(const std::vector<metrics::NamedMetrics>& rows) {
  json per = json::array();
  for (const auto& r : rows) {
    json j = to_json(r.values);
    j["id"] = r.id;
    per.push_back(j);
  }
  return {{"count", rows.size()}, {"aggregate", to_json(metrics::aggregate(rows))}, {"per_image", per}};
}

template <typename T>
Batch<T> make_batch(const std::vector<LoadedSample>& samples, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw DataError("empty batch");
  const Shape& s = samples.at(indices[0]).fundus.shape();
  if (s.size() != 3) throw ShapeError("batch sample must be [C, H, W], got " + to_string(s));
  const Index b = static_cast<Index>(indices.size());
  const Index per = numel(s);
  Array<T> x(Shape{b, s[0], s[1], s[2]});
  Array<T> y(Shape{b, s[0], s[1], s[2]});
  Batch<T> batch;
  for (Index n = 0; n < b; ++n) {
    const LoadedSample& ls = samples.at(indices[static_cast<std::size_t>(n)]);
    require_same_shape(s, ls.fundus.shape(), "batch fundus " + ls.id);
    require_same_shape(s, ls.heightmap.shape(), "batch heightmap " + ls.id);
    for (Index i = 0; i < per; ++i) {
      x[n * per + i] = static_cast<T>(ls.fundus[i]);
      y[n * per + i] = static_cast<T>(ls.heightmap[i]);
    }
    batch.ids.push_back(ls.id);
  }
  batch.x = Tensor<T>(std::move(x));
  batch.y = Tensor<T>(std::move(y));
  return batch;
}

namespace {
RunConfig validated(RunConfig cfg) {
  cfg.validate();
  return cfg;
}
}  // namespace

template <typename T>
Trainer<T>::Trainer(RunConfig cfg)
    : Trainer(validated(cfg), Rng(derive_seed(cfg.train.seed, {kInitTag}))) {}

template <typename T>
Trainer<T>::Trainer(RunConfig cfg, Rng&& init_rng)
    : cfg_(std::move(cfg)),
      g_(cfg_.generator, init_rng),
      d_(cfg_.discriminator, init_rng),
      g_opt_(g_.parameters(), cfg_.train.adam()),
      d_opt_(d_.parameters(), cfg_.train.adam()) {
  state_.lr_current = lr_schedule(0, cfg_.train);
}

template <typename T>
void Trainer<T>::set_train_config(const TrainConfig& t) {
  t.validate();
  if (t.resolution % cfg_.generator.resolution_divisor() != 0) {
    throw ConfigError("train.resolution is not divisible by " + std::to_string(cfg_.generator.resolution_divisor()));
  }
  cfg_.train = t;
  g_opt_.set_options(t.adam());
  d_opt_.set_options(t.adam());
}

template <typename T>
Tensor<T> Trainer<T>::check_finite(const Tensor<T>& loss, const char* what, const Batch<T>& batch) const {
  if (!std::isfinite(static_cast<double>(loss.item()))) {
    throw TrainingDiverged(std::string("non-finite ") + what + " loss at step " + std::to_string(state_.global_step) +
                           " (epoch " + std::to_string(state_.epoch) + "); batch ids: " + join_ids(batch.ids));
  }
  return loss;
}

template <typename T>
GeneratorOutput<T> Trainer<T>::generate(const Batch<T>& batch) {
  Rng rng(derive_seed(cfg_.train.seed, {kNoiseTag, static_cast<std::uint64_t>(state_.global_step)}));
  return g_.forward(batch.x, Mode::train, &rng);
}

template <typename T>
double Trainer<T>::discriminator_step(const Batch<T>& batch, const GeneratorOutput<T>& out) {
  const Tensor<T> fake = out.final.detach();
  double last = 0.0;
  for (Index r = 0; r < cfg_.train.d_steps; ++r) {
    const auto real_out = d_.forward(batch.x, batch.y, Mode::train);
    const auto fake_out = d_.forward(batch.x, fake, Mode::train);
    const Tensor<T> loss = check_finite(lsgan_d_loss(real_out.logits, fake_out.logits), "discriminator", batch);
    backward(loss);
    d_opt_.step(state_.lr_current);
    last = static_cast<double>(loss.item());
  }
  return last;
}

template <typename T>
GeneratorObjective<T> generator_objective(const RunConfig& cfg, Discriminator<T>& d, const Batch<T>& batch,
                                          const GeneratorOutput<T>& out) {
  std::vector<Tensor<T>> heads;
  if (cfg.loss_per_head) {
    for (int h : cfg.generator.supervised_heads) heads.push_back(out.heads[static_cast<std::size_t>(h)]);
  } else {
    heads.push_back(out.final);
  }
  const Index n = static_cast<Index>(heads.size());
  const Index b = batch.x.dim(0);

  std::vector<Tensor<T>> real_taps;
  {
    NoGradGuard no_grad;
    real_taps = d.forward(batch.x, batch.y, Mode::eval).taps;
  }
  // All heads go through the discriminator in one batch.
  const Tensor<T> ys = ops::concat(heads, 0);
  const Tensor<T> xs = ops::concat(std::vector<Tensor<T>>(static_cast<std::size_t>(n), batch.x), 0);
  const auto fake_out = d.forward(xs, ys, Mode::eval);

  GeneratorObjective<T> obj;
  StepLosses& s = obj.parts;
  for (Index h = 0; h < n; ++h) {
    std::vector<Tensor<T>> taps;
    for (const auto& t : fake_out.taps) taps.push_back(ops::narrow(t, 0, h * b, b));
    GeneratorLossParts<T> parts{perceptual_loss(real_taps, taps, cfg.loss),
                                l2_loss(batch.y, heads[static_cast<std::size_t>(h)]),
                                lsgan_g_loss(ops::narrow(fake_out.logits, 0, h * b, b))};
    const Tensor<T> t = generator_total_loss(parts, cfg.loss);
    obj.total = h == 0 ? t : ops::add(obj.total, t);
    s.l2 += static_cast<double>(parts.l2.item());
    s.perceptual += static_cast<double>(parts.perceptual.item());
    s.adversarial += static_cast<double>(parts.adversarial.item());
  }
  obj.total = ops::mul_scalar(obj.total, static_cast<T>(1.0 / static_cast<double>(n)));
  s.g = static_cast<double>(obj.total.item());
  s.l2 /= static_cast<double>(n);
  s.perceptual /= static_cast<double>(n);
  s.adversarial /= static_cast<double>(n);
  return obj;
}

template <typename T>
StepLosses Trainer<T>::generator_step(const Batch<T>& batch, const GeneratorOutput<T>& out) {
  FreezeGuard<T> freeze(d_.parameters());
  GeneratorObjective<T> obj = generator_objective(cfg_, d_, batch, out);
  check_finite(obj.total, "generator", batch);
  backward(obj.total);
  g_opt_.step(state_.lr_current);
  return obj.parts;
}

template <typename T>
StepLosses Trainer<T>::train_step(const Batch<T>& batch) {
  const GeneratorOutput<T> out = generate(batch);
  const double d = discriminator_step(batch, out);
  StepLosses s = generator_step(batch, out);
  s.d = d;
  ++state_.global_step;
  return s;
}

template <typename T>
EpochRecord Trainer<T>::train_epoch(const std::vector<LoadedSample>& train, const std::vector<LoadedSample>& val,
                                    const std::function<void(const StepRecord&)>& on_step) {
  if (train.empty()) throw DataError("training split is empty");
  EpochRecord rec;
  rec.epoch = state_.epoch;
  state_.lr_current = lr_schedule(rec.epoch, cfg_.train);
  rec.lr = state_.lr_current;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(derive_seed(cfg_.train.seed, {kShuffleTag, static_cast<std::uint64_t>(rec.epoch)}));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  const auto bs = static_cast<std::size_t>(cfg_.train.batch_size);
  for (std::size_t start = 0; start < order.size(); start += bs) {
    const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                       order.begin() + static_cast<std::ptrdiff_t>(std::min(start + bs, order.size())));
    const StepLosses s = train_step(make_batch<T>(train, idx));
    rec.train.d += s.d;
    rec.train.g += s.g;
    rec.train.l2 += s.l2;
    rec.train.perceptual += s.perceptual;
    rec.train.adversarial += s.adversarial;
    ++rec.steps;
    if (on_step) on_step({rec.epoch, state_.global_step - 1, rec.lr, s});
  }
  const double k = static_cast<double>(rec.steps);
  rec.train.d /= k;
  rec.train.g /= k;
  rec.train.l2 /= k;
  rec.train.perceptual /= k;
  rec.train.adversarial /= k;

  if (!val.empty()) rec.val = validate(val);
  state_.epoch = rec.epoch + 1;
  state_.history.push_back(rec);
  return rec;
}

template <typename T>
Rng Trainer<T>::validation_rng() const {
  return Rng(derive_seed(cfg_.train.seed, {kValidationTag}));
}

template <typename T>
Array<T> Trainer<T>::predict(const Array<T>& x, Rng* noise_rng) {
  if (x.rank() != 4 || x.dim(1) != cfg_.generator.image_channels) {
    throw ShapeError("predict expects [N, " + std::to_string(cfg_.generator.image_channels) + ", H, W], got " +
                     to_string(x.shape()));
  }
  NoGradGuard no_grad;
  return g_.forward(Tensor<T>(x), Mode::eval, noise_rng).final.value();
}

template <typename T>
std::vector<metrics::NamedMetrics> Trainer<T>::evaluate(const std::vector<LoadedSample>& samples) {
  if (samples.empty()) throw DataError("cannot evaluate an empty split");
  Rng rng = validation_rng();
  std::vector<metrics::NamedMetrics> rows;
  const auto bs = static_cast<std::size_t>(cfg_.train.batch_size);
  for (std::size_t start = 0; start < samples.size(); start += bs) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(start + bs, samples.size()); ++i) idx.push_back(i);
    const Batch<T> batch = make_batch<T>(samples, idx);
    const Array<T> pred = predict(batch.x.value(), &rng);
    const auto m = metrics::batch_metrics(pred, batch.y.value(), batch.x.value(), d_);
    for (std::size_t i = 0; i < m.size(); ++i) rows.push_back({batch.ids[i], m[i]});
  }
  return rows;
}

template <typename T>
ValidationResult Trainer<T>::validate(const std::vector<LoadedSample>& val) {
  return summarize(evaluate(val));
}

template <typename T>
void Trainer<T>::save(const fs::path& path) {
  CheckpointPayload<T> p;
  p.config = to_json(cfg_);
  p.state = to_json(state_);
  p.gen_params = param_arrays(g_.parameters());
  p.gen_buffers = buffer_arrays(g_.buffers());
  p.disc_params = param_arrays(d_.parameters());
  p.disc_buffers = buffer_arrays(d_.buffers());
  p.gen_adam = adam_entries(g_opt_);
  p.disc_adam = adam_entries(d_opt_);
  write_checkpoint(path, p);
}

template <typename T>
void Trainer<T>::restore(const fs::path& path) {
  const CheckpointPayload<T> p = read_checkpoint<T>(path);
  RunConfig stored;
  RunState st;
  try {
    stored = run_config_from_json(p.config);
    st = run_state_from_json(p.state);
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(Kind::corrupt, path.string() + ": unreadable checkpoint header: " + e.what());
  }
  if (stored.generator != cfg_.generator || stored.discriminator != cfg_.discriminator) {
    throw CheckpointError(Kind::spec_mismatch, path.string() + ": checkpoint model spec differs from the configured one");
  }

  // Stage every assignment before touching the model.
  auto gp = g_.parameters();
  auto gb = g_.buffers();
  auto dp = d_.parameters();
  auto db = d_.buffers();
  const auto lgp = layout(gp), lgb = layout(gb), ldp = layout(dp), ldb = layout(db);
  const auto sgp = match_entries(p.gen_params, lgp.names, lgp.shapes, "generator parameters");
  const auto sgb = match_entries(p.gen_buffers, lgb.names, lgb.shapes, "generator buffers");
  const auto sdp = match_entries(p.disc_params, ldp.names, ldp.shapes, "discriminator parameters");
  const auto sdb = match_entries(p.disc_buffers, ldb.names, ldb.shapes, "discriminator buffers");
  const auto sga = match_adam(p.gen_adam, layout(g_opt_.parameters()), "generator optimizer");
  const auto sda = match_adam(p.disc_adam, layout(d_opt_.parameters()), "discriminator optimizer");

  for (std::size_t i = 0; i < gp.size(); ++i) gp[i].tensor.mutable_value() = *sgp[i];
  for (std::size_t i = 0; i < gb.size(); ++i) *gb[i].array = *sgb[i];
  for (std::size_t i = 0; i < dp.size(); ++i) dp[i].tensor.mutable_value() = *sdp[i];
  for (std::size_t i = 0; i < db.size(); ++i) *db[i].array = *sdb[i];
  auto load_adam = [](Adam<T>& opt, const std::vector<const AdamEntry<T>*>& entries) {
    opt.zero_grad();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      opt.states()[i] = AdamState<T>{entries[i]->m, entries[i]->v, entries[i]->step};
    }
  };
  load_adam(g_opt_, sga);
  load_adam(d_opt_, sda);
  state_ = std::move(st);
}

template <typename T>
std::unique_ptr<Trainer<T>> Trainer<T>::from_checkpoint(const fs::path& path) {
  const CheckpointHeader h = read_checkpoint_header(path);
  if (h.scalar_bytes != sizeof(T)) {
    throw CheckpointError(Kind::precision_mismatch, path.string() + ": checkpoint stores " +
                                                        std::to_string(h.scalar_bytes * 8) + "-bit values");
  }
  RunConfig cfg;
  try {
    cfg = run_config_from_json(h.config);
  } catch (const std::exception& e) {
    throw CheckpointError(Kind::corrupt, path.string() + ": unreadable checkpoint config: " + e.what());
  }
  auto t = std::make_unique<Trainer<T>>(cfg);
  t->restore(path);
  return t;
}

template <typename T>
void fit(Trainer<T>& trainer, const std::vector<LoadedSample>& train, const std::vector<LoadedSample>& val,
         const fs::path& run_dir, const std::function<void(const EpochRecord&)>& on_epoch) {
  std::error_code ec;
  fs::create_directories(run_dir / "checkpoints", ec);
  if (ec) throw Error("cannot create run directory " + run_dir.string() + ": " + ec.message());
  {
    std::ofstream cfg_out(run_dir / "config.json", std::ios::trunc);
    cfg_out << serialize_config(trainer.config());
    if (!cfg_out.flush()) throw Error("write failed: " + (run_dir / "config.json").string());
  }
  const fs::path log_path = run_dir / "train_log.jsonl";
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw Error("cannot open " + log_path.string());
  auto write_line = [&](const json& j) {
    log << j.dump() << '\n';
    if (!log.flush()) throw Error("write failed (disk full?): " + log_path.string());
  };

  RunState& st = trainer.state();
  try {
    while (st.epoch < trainer.config().train.epochs) {
      const EpochRecord rec = trainer.train_epoch(train, val, [&](const StepRecord& r) {
        write_line({{"kind", "step"},
                    {"epoch", r.epoch},
                    {"step", r.step},
                    {"lr", r.lr},
                    {"loss_d", r.losses.d},
                    {"loss_g", r.losses.g},
                    {"loss_l2", r.losses.l2},
                    {"loss_perceptual", r.losses.perceptual},
                    {"loss_adv", r.losses.adversarial}});
      });
      json ej = to_json(rec);
      ej["kind"] = "epoch";
      write_line(ej);

      if (rec.val && rec.val->l2 < st.best_val_l2) {
        st.best_val_l2 = rec.val->l2;
        st.best_epoch = rec.epoch;
        st.best_checkpoint = "checkpoints/best.ckpt";
        trainer.save(run_dir / st.best_checkpoint);
      }
      const Index every = trainer.config().train.checkpoint_every;
      if (every > 0 && (rec.epoch + 1) % every == 0) {
        std::ostringstream name;
        name << "epoch_" << std::setw(4) << std::setfill('0') << rec.epoch + 1 << ".ckpt";
        trainer.save(run_dir / "checkpoints" / name.str());
      }
      trainer.save(run_dir / "checkpoints" / "last.ckpt");
      if (on_epoch) on_epoch(rec);
    }
  } catch (const TrainingDiverged& e) {
    std::ofstream dump(run_dir / "diverged.json", std::ios::trunc);
    dump << json{{"error", e.what()}, {"epoch", st.epoch}, {"global_step", st.global_step}}.dump(2) << '\n';
    throw;
  }

  if (!val.empty()) {
    std::ofstream report(run_dir / "final_metrics.json", std::ios::trunc);
    report << report_json(trainer.evaluate(val)).dump(2) << '\n';
    if (!report.flush()) throw Error("write failed: " + (run_dir / "final_metrics.json").string());
  }
}

template Batch<float> make_batch(const std::vector<LoadedSample>&, const std::vector<std::size_t>&);
template Batch<double> make_batch(const std::vector<LoadedSample>&, const std::vector<std::size_t>&);
template GeneratorObjective<float> generator_objective(const RunConfig&, Discriminator<float>&, const Batch<float>&,
                                                       const GeneratorOutput<float>&);
template GeneratorObjective<double> generator_objective(const RunConfig&, Discriminator<double>&,
                                                        const Batch<double>&, const GeneratorOutput<double>&);
template class Trainer<float>;
template class Trainer<double>;
template void fit(Trainer<float>&, const std::vector<LoadedSample>&, const std::vector<LoadedSample>&, const fs::path&,
                  const std::function<void(const EpochRecord&)>&);
template void fit(Trainer<double>&, const std::vector<LoadedSample>&, const std::vector<LoadedSample>&,
                  const fs::path&, const std::function<void(const EpochRecord&)>&);

}  // namespace hmap
