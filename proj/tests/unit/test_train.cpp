#include <doctest.h>

#include <cmath>
#include <fstream>

#include "hmap/train/adam.hpp"
#include "hmap/train/checkpoint.hpp"
#include "hmap/train/trainer.hpp"
#include "testkit.hpp"

using namespace testkit;
using hmap::CheckpointError;
using hmap::Trainer;
namespace fs = std::filesystem;

namespace {

using Kind = CheckpointError::Kind;

template <typename T>
hmap::Batch<T> first_batch(const std::vector<hmap::LoadedSample>& s, std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  return hmap::make_batch<T>(s, idx);
}

template <typename T>
bool differs(const std::vector<Array<T>>& a, const std::vector<Array<T>>& b) {
  return a != b;
}

template <typename T>
void check_same_weights(Trainer<T>& a, Trainer<T>& b) {
  CHECK(snapshot(a.generator().parameters()) == snapshot(b.generator().parameters()));
  CHECK(snapshot(a.generator().buffers()) == snapshot(b.generator().buffers()));
  CHECK(snapshot(a.discriminator().parameters()) == snapshot(b.discriminator().parameters()));
  CHECK(snapshot(a.discriminator().buffers()) == snapshot(b.discriminator().buffers()));
  const auto& sa = a.generator_optimizer().states();
  const auto& sb = b.generator_optimizer().states();
  REQUIRE(sa.size() == sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i].step == sb[i].step);
    CHECK(sa[i].m == sb[i].m);
    CHECK(sa[i].v == sb[i].v);
  }
  CHECK(a.state() == b.state());
}

Kind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  FAIL("no CheckpointError thrown");
  return Kind::io;
}

void patch(const fs::path& p, std::size_t offset, char value) {
  std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(static_cast<std::streamoff>(offset));
  f.put(value);
}

}  // namespace

TEST_CASE("first Adam step moves each coordinate by lr against the gradient sign") {
  Array<double> p(Shape{4}, {1.0, -2.0, 0.5, 3.0});
  const Array<double> g(Shape{4}, {0.3, -4.0, 1e-3, 0.0});
  hmap::AdamState<double> st;
  const hmap::AdamOptions opt;
  hmap::adam_update(p, g, st, 0.01, opt);
  const double p0[] = {1.0, -2.0, 0.5, 3.0};
  for (Index i = 0; i < 4; ++i) {
    const double expect = p0[i] - 0.01 * g[i] / (std::abs(g[i]) + opt.eps);
    CHECK(p[i] == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(st.step == 1);
}

TEST_CASE("a zero gradient leaves the parameter and decays the moments") {
  Array<double> p(Shape{2}, {1.0, 2.0});
  hmap::AdamState<double> st{Array<double>(Shape{2}, {0.4, -0.2}), Array<double>(Shape{2}, {0.0, 0.0}), 0};
  hmap::adam_update(p, Array<double>(Shape{2}, 0.0), st, 0.1, hmap::AdamOptions{0.5, 0.999, 1e-8});
  CHECK(st.m[0] == 0.2);
  CHECK(st.m[1] == -0.1);
  // With v = 0 the step is m_hat / eps; start from v > 0 to check a still point.
  Array<double> q(Shape{2}, {1.0, 2.0});
  hmap::AdamState<double> s2{Array<double>(Shape{2}, 0.0), Array<double>(Shape{2}, {0.5, 0.25}), 3};
  hmap::adam_update(q, Array<double>(Shape{2}, 0.0), s2, 0.1, hmap::AdamOptions{});
  CHECK(q == Array<double>(Shape{2}, {1.0, 2.0}));
  CHECK(s2.v[0] == doctest::Approx(0.5 * 0.999).epsilon(1e-15));
}

TEST_CASE("Adam rejects mismatched shapes") {
  Array<double> p(Shape{3});
  hmap::AdamState<double> st;
  CHECK_THROWS_AS(hmap::adam_update(p, Array<double>(Shape{2}), st, 0.1, {}), hmap::ShapeError);
}

TEST_CASE("Adam matches the scripted trace over 3 steps") {
  // f(p) = sum(c_i * p_i^2)
  const oracle::Vec c{0.5, 2.0, 1.5};
  auto grad = [&](const oracle::Vec& p) {
    oracle::Vec g(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) g[i] = 2.0 * c[i] * p[i];
    return g;
  };
  const oracle::Vec p0{1.0, -0.5, 2.0};
  const auto trace = oracle::adam_trace(p0, grad, 3, 0.1, 0.5, 0.999, 1e-8);
  Array<double> p(Shape{3}, std::vector<double>(p0));
  hmap::AdamState<double> st;
  for (int k = 0; k < 3; ++k) {
    const auto g = grad(to_vec(p));
    hmap::adam_update(p, from_vec<double>(Shape{3}, g), st, 0.1, hmap::AdamOptions{0.5, 0.999, 1e-8});
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(p[static_cast<Index>(i)] - trace[static_cast<std::size_t>(k)][i]) < 1e-10);
  }
}

TEST_CASE("learning-rate schedule") {
  const hmap::TrainConfig cfg;
  CHECK(hmap::lr_schedule(0, cfg) == 1e-3);
  CHECK(hmap::lr_schedule(29, cfg) == 1e-3);
  CHECK(hmap::lr_schedule(30, cfg) == doctest::Approx(9e-4).epsilon(1e-15));
  CHECK(hmap::lr_schedule(90, cfg) == doctest::Approx(7.29e-4).epsilon(1e-15));
  for (Index e = 0; e <= 250; ++e) {
    double expect = 1e-3;
    for (Index k = 0; k < e / 30; ++k) expect *= 0.9;
    CHECK(hmap::lr_schedule(e, cfg) == doctest::Approx(expect).epsilon(1e-14));
  }
  CHECK_THROWS_AS(hmap::lr_schedule(-1, cfg), hmap::ConfigError);
}

TEST_CASE("training config validation") {
  hmap::TrainConfig t;
  t.decay = 1.5;
  CHECK_THROWS_AS(t.validate(), hmap::ConfigError);
  t = {};
  t.decay = 0.0;
  CHECK_THROWS_AS(t.validate(), hmap::ConfigError);
  t = {};
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), hmap::ConfigError);
  t = {};
  t.lr0 = -1e-3;
  CHECK_THROWS_AS(t.validate(), hmap::ConfigError);
}

TEST_CASE("one step changes both networks") {
  const auto samples = synthetic_samples(4, 32, 1);
  Trainer<float> t(toy_run_config());
  const auto g0 = snapshot(t.generator().parameters());
  const auto d0 = snapshot(t.discriminator().parameters());
  const auto s = t.train_step(first_batch<float>(samples, 4));
  CHECK(differs(g0, snapshot(t.generator().parameters())));
  CHECK(differs(d0, snapshot(t.discriminator().parameters())));
  CHECK(std::isfinite(s.d));
  CHECK(std::isfinite(s.g));
  CHECK(s.l2 > 0.0);
  CHECK(s.perceptual > 0.0);
  CHECK(s.adversarial > 0.0);
  CHECK(t.state().global_step == 1);
}

TEST_CASE("each player's update leaves the other untouched") {
  const auto samples = synthetic_samples(4, 32, 2);
  Trainer<double> t(toy_run_config());
  const auto batch = first_batch<double>(samples, 4);
  const auto out = t.generate(batch);

  const auto gp = snapshot(t.generator().parameters());
  const auto gb = snapshot(t.generator().buffers());
  const auto dp = snapshot(t.discriminator().parameters());
  t.discriminator_step(batch, out);
  CHECK(snapshot(t.generator().parameters()) == gp);
  CHECK(snapshot(t.generator().buffers()) == gb);
  CHECK(differs(dp, snapshot(t.discriminator().parameters())));
  for (const auto& p : t.generator().parameters()) CHECK_FALSE(p.tensor.has_grad());

  const auto dp1 = snapshot(t.discriminator().parameters());
  const auto db1 = snapshot(t.discriminator().buffers());
  t.generator_step(batch, out);
  CHECK(snapshot(t.discriminator().parameters()) == dp1);
  CHECK(snapshot(t.discriminator().buffers()) == db1);
  CHECK(differs(gp, snapshot(t.generator().parameters())));
  for (const auto& p : t.discriminator().parameters()) CHECK_FALSE(p.tensor.has_grad());
}

TEST_CASE("the generator loss gives the discriminator no gradient and vice versa") {
  const auto samples = synthetic_samples(2, 32, 3);
  const auto cfg = toy_run_config(32, 2);
  hmap::Rng rng(4);
  hmap::Generator<double> g(cfg.generator, rng);
  hmap::Discriminator<double> d(cfg.discriminator, rng);
  const auto batch = first_batch<double>(samples, 2);
  hmap::Rng noise(5);
  {
    const auto out = g.forward(batch.x, hmap::Mode::train, &noise);
    std::vector<Tensor<double>> frozen;
    for (auto p : d.parameters()) {
      p.tensor.set_requires_grad(false);
      frozen.push_back(p.tensor);
    }
    hmap::backward(hmap::generator_objective(cfg, d, batch, out).total);
    for (const auto& p : d.parameters()) CHECK_FALSE(p.tensor.has_grad());
    for (auto& p : frozen) p.set_requires_grad(true);
  }
  for (auto p : g.parameters()) p.tensor.zero_grad();
  const auto out = g.forward(batch.x, hmap::Mode::train, &noise);
  const auto real = d.forward(batch.x, batch.y, hmap::Mode::train);
  const auto fake = d.forward(batch.x, out.final.detach(), hmap::Mode::train);
  hmap::backward(hmap::lsgan_d_loss(real.logits, fake.logits));
  for (const auto& p : g.parameters()) CHECK_FALSE(p.tensor.has_grad());
}

TEST_CASE("with only the L2 term training is supervised regression and the loss falls") {
  const auto samples = synthetic_samples(8, 32, 6);
  auto cfg = toy_run_config(32, 8);
  cfg.loss.alpha_perceptual = 0.0;
  cfg.loss.alpha_adv = 0.0;
  cfg.loss.alpha_l2 = 1.0;
  Trainer<float> t(cfg);
  const auto batch = first_batch<float>(samples, 8);
  std::vector<double> l2;
  for (int step = 0; step < 50; ++step) l2.push_back(t.train_step(batch).l2);
  INFO("first " << l2.front() << " last " << l2.back());
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 5; ++i) {
    head += l2[static_cast<std::size_t>(i)];
    tail += l2[l2.size() - 1 - static_cast<std::size_t>(i)];
  }
  CHECK(tail < 0.5 * head);
}

TEST_CASE("identically seeded 64-bit runs agree to the last bit") {
  const auto train = synthetic_samples(6, 32, 7);
  const auto val = synthetic_samples(2, 32, 8);
  Trainer<double> a(toy_run_config()), b(toy_run_config());
  for (int e = 0; e < 2; ++e) CHECK(a.train_epoch(train, val) == b.train_epoch(train, val));
  check_same_weights(a, b);

  auto other = toy_run_config();
  other.train.seed = 1;
  Trainer<double> c(other);
  CHECK_FALSE(c.train_epoch(train, val) == a.state().history[0]);
}

TEST_CASE("checkpoint round trip is bit-identical") {
  TempDir dir("ckpt");
  const auto train = synthetic_samples(4, 32, 9);
  Trainer<double> t(toy_run_config());
  t.train_epoch(train, {});
  t.save(dir.path / "a.ckpt");
  const auto back = Trainer<double>::from_checkpoint(dir.path / "a.ckpt");
  check_same_weights(t, *back);
  CHECK(back->config() == t.config());

  CHECK(kind_of([&] { Trainer<float>::from_checkpoint(dir.path / "a.ckpt"); }) == Kind::precision_mismatch);
}

TEST_CASE("resuming from a checkpoint continues the same trajectory") {
  TempDir dir("resume");
  const auto train = synthetic_samples(6, 32, 10);
  const auto val = synthetic_samples(2, 32, 11);
  Trainer<double> straight(toy_run_config());
  for (int e = 0; e < 3; ++e) straight.train_epoch(train, val);

  Trainer<double> first(toy_run_config());
  first.train_epoch(train, val);
  first.save(dir.path / "e1.ckpt");
  const auto resumed = Trainer<double>::from_checkpoint(dir.path / "e1.ckpt");
  resumed->train_epoch(train, val);
  resumed->train_epoch(train, val);
  CHECK(resumed->state().history == straight.state().history);
  check_same_weights(straight, *resumed);
}

TEST_CASE("a checkpoint for a different model is rejected without a partial load") {
  TempDir dir("spec");
  Trainer<double> t(toy_run_config());
  t.save(dir.path / "a.ckpt");
  auto cfg = toy_run_config();
  cfg.generator = hmap::GeneratorSpec::make(2, 4, 8);
  Trainer<double> other(cfg);
  const auto before = snapshot(other.generator().parameters());
  const auto d_before = snapshot(other.discriminator().parameters());
  CHECK(kind_of([&] { other.restore(dir.path / "a.ckpt"); }) == Kind::spec_mismatch);
  CHECK(snapshot(other.generator().parameters()) == before);
  CHECK(snapshot(other.discriminator().parameters()) == d_before);
}

TEST_CASE("corrupt, foreign and future-version files are rejected") {
  TempDir dir("corrupt");
  Trainer<double> t(toy_run_config());
  const auto good = dir.path / "good.ckpt";
  t.save(good);
  const auto size = fs::file_size(good);

  auto copy = [&](const std::string& name) {
    const auto p = dir.path / name;
    fs::copy_file(good, p, fs::copy_options::overwrite_existing);
    return p;
  };
  const auto flipped = copy("flip.ckpt");
  patch(flipped, size / 2, static_cast<char>(read_file(good)[size / 2] ^ 0x5a));
  CHECK(kind_of([&] { t.restore(flipped); }) == Kind::corrupt);

  const auto magic = copy("magic.ckpt");
  patch(magic, 0, 'X');
  CHECK(kind_of([&] { t.restore(magic); }) == Kind::bad_magic);

  const auto version = copy("version.ckpt");
  patch(version, 8, static_cast<char>(hmap::kCheckpointVersion + 1));
  CHECK(kind_of([&] { t.restore(version); }) == Kind::version_mismatch);

  const auto truncated = copy("short.ckpt");
  fs::resize_file(truncated, size - 10);
  CHECK(kind_of([&] { t.restore(truncated); }) == Kind::corrupt);

  CHECK(kind_of([&] { t.restore(dir.path / "missing.ckpt"); }) == Kind::io);
}

TEST_CASE("a non-finite loss aborts with the offending batch ids") {
  const auto samples = synthetic_samples(2, 32, 12);
  Trainer<float> t(toy_run_config(32, 2));
  t.generator().parameters()[0].tensor.mutable_value()[0] = std::nanf("");
  try {
    t.train_step(first_batch<float>(samples, 2));
    FAIL("expected TrainingDiverged");
  } catch (const hmap::TrainingDiverged& e) {
    const std::string msg = e.what();
    CHECK(msg.find("s0") != std::string::npos);
    CHECK(msg.find("s1") != std::string::npos);
  }
}

TEST_CASE("validation is reproducible from a checkpoint") {
  TempDir dir("val");
  const auto train = synthetic_samples(4, 32, 13);
  const auto val = synthetic_samples(3, 32, 14);
  Trainer<float> t(toy_run_config());
  t.train_epoch(train, {});
  const auto v1 = t.validate(val);
  CHECK(t.validate(val) == v1);
  t.save(dir.path / "a.ckpt");
  CHECK(Trainer<float>::from_checkpoint(dir.path / "a.ckpt")->validate(val) == v1);
  CHECK(v1.count == 3);
}

TEST_CASE("fit writes the run directory") {
  TempDir dir("fit");
  const auto train = synthetic_samples(4, 32, 15);
  const auto val = synthetic_samples(2, 32, 16);
  auto cfg = toy_run_config();
  cfg.train.epochs = 2;
  cfg.train.checkpoint_every = 1;
  Trainer<float> t(cfg);
  int epochs_seen = 0;
  hmap::fit(t, train, val, dir.path, [&](const hmap::EpochRecord&) { ++epochs_seen; });
  CHECK(epochs_seen == 2);
  for (const char* f : {"config.json", "train_log.jsonl", "final_metrics.json", "checkpoints/last.ckpt",
                        "checkpoints/best.ckpt", "checkpoints/epoch_0001.ckpt", "checkpoints/epoch_0002.ckpt"}) {
    CHECK_MESSAGE(fs::exists(dir.path / f), f);
  }
  const auto log = read_file(dir.path / "train_log.jsonl");
  std::size_t lines = 0, steps = 0;
  for (std::size_t pos = 0; (pos = log.find('\n', pos)) != std::string::npos; ++pos) ++lines;
  for (std::size_t pos = 0; (pos = log.find("\"kind\":\"step\"", pos)) != std::string::npos; ++pos) ++steps;
  CHECK(steps == 2);
  CHECK(lines == 4);
  CHECK(hmap::parse_config(read_file(dir.path / "config.json")) == cfg);
}

TEST_CASE("run state survives its JSON form") {
  hmap::RunState s;
  s.epoch = 3;
  s.global_step = 17;
  s.lr_current = 9e-4;
  s.history.push_back({0, 1e-3, 5, {0.1, 0.2, 0.3, 0.4, 0.5}, hmap::ValidationResult{2, 0.01, 0.9, 20.0, 0.1, 3.0}});
  s.history.push_back({1, 1e-3, 5, {0.1, 0.2, 0.3, 0.4, 0.5}, std::nullopt});
  s.best_val_l2 = 0.01;
  s.best_epoch = 0;
  s.best_checkpoint = "checkpoints/best.ckpt";
  CHECK(hmap::run_state_from_json(hmap::to_json(s)) == s);
  CHECK(hmap::run_state_from_json(hmap::to_json(hmap::RunState{})) == hmap::RunState{});
}
