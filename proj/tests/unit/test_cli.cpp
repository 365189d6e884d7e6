#include <doctest.h>
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "hmap/data/dataset.hpp"
#include "hmap/data/image_io.hpp"
#include "hmap/metrics.hpp"
#include "testkit.hpp"

using namespace testkit;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

// Runs the CLI with `args` inside `cwd`.
Result run(const fs::path& cwd, const std::string& args, const std::string& env = "") {
  const fs::path out = cwd / ".stdout", err = cwd / ".stderr";
  const std::string cmd = "cd " + quote(cwd.string()) + " && " + env + (env.empty() ? "" : " ") +
                          quote(HMAP_CLI_PATH) + " " + args + " > " + quote(out.string()) + " 2> " +
                          quote(err.string());
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

std::string smoke_config() { return quote(std::string(HMAP_SOURCE_DIR) + "/configs/smoke.json"); }

std::vector<std::string> epoch_lines(const fs::path& log) {
  std::istringstream in(read_file(log));
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (contains(line, "\"kind\":\"epoch\"")) out.push_back(line);
  }
  return out;
}

// One dataset and one smoke run shared by the tests below, built on first use.
struct Workspace {
  TempDir dir{"cli"};
  bool data_ready = false;
  bool smoke_ready = false;
  double smoke_seconds = 0.0;

  const fs::path& root() const { return dir.path; }

  void ensure_data() {
    if (data_ready) return;
    const auto r = run(root(), "gen-data --n 10 --resolution 32 --seed 1 --out data");
    REQUIRE(r.code == 0);
    data_ready = true;
  }

  void ensure_smoke() {
    ensure_data();
    if (smoke_ready) return;
    const auto start = std::chrono::steady_clock::now();
    const auto r = run(root(), "train --data data --out smoke --config " + smoke_config());
    smoke_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    INFO(r.err);
    REQUIRE(r.code == 0);
    smoke_ready = true;
  }
};

Workspace& ws() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("help documents every flag and the training defaults") {
  const auto top = run(ws().root(), "--help");
  CHECK(top.code == 0);
  for (const char* sub : {"gen-data", "train", "infer", "evaluate"}) CHECK(contains(top.out, sub));

  const auto gen = run(ws().root(), "gen-data --help");
  for (const char* flag : {"--n", "--resolution", "--seed", "--out", "--force", "[50]", "[64]"}) {
    CHECK_MESSAGE(contains(gen.out, flag), flag);
  }
  const auto train = run(ws().root(), "train --help");
  for (const char* s : {"--data", "--out", "--config", "--resume", "--epochs", "--seed", "1e-3", "0.9", "30 epochs",
                        "batch 8", "250", "(0.5, 0.999)", "(5,1,5,5)"}) {
    CHECK_MESSAGE(contains(train.out, s), s);
  }
  const auto infer = run(ws().root(), "infer --help");
  for (const char* s : {"--ckpt", "--fundus", "--out", "--seed"}) CHECK_MESSAGE(contains(infer.out, s), s);
  const auto eval = run(ws().root(), "evaluate --help");
  for (const char* s : {"--ckpt", "--data", "--split", "--out", "[test]"}) CHECK_MESSAGE(contains(eval.out, s), s);
}

TEST_CASE("usage errors exit non-zero") {
  CHECK(run(ws().root(), "").code != 0);
  CHECK(run(ws().root(), "bogus").code != 0);
  CHECK(run(ws().root(), "gen-data").code != 0);
  CHECK(run(ws().root(), "gen-data --out x --frobnicate").code != 0);
}

TEST_CASE("gen-data writes 4 flips per image, splits by base image and is idempotent") {
  const auto r = run(ws().root(), "gen-data --n 50 --resolution 64 --seed 7 --out d50");
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "200 pairs"));
  CHECK(contains(r.out, "40/5/5 base images"));
  const auto m = hmap::read_manifest(ws().root() / "d50");
  CHECK(m.entries.size() == 200);
  CHECK(m.select(hmap::Split::train).size() == 160);

  const auto manifest = read_file(ws().root() / "d50" / hmap::kManifestName);
  const auto again = run(ws().root(), "gen-data --n 50 --resolution 64 --seed 7 --out d50");
  CHECK(again.code == 0);
  CHECK(contains(again.out, "nothing to do"));

  const auto changed = run(ws().root(), "gen-data --n 50 --resolution 64 --seed 8 --out d50");
  CHECK(changed.code != 0);
  CHECK(contains(changed.err, "--force"));

  hmap::write_png(ws().root() / "d50" / m.entries[0].fundus, hmap::Image(hmap::Shape{3, 64, 64}, 0.0f));
  CHECK(run(ws().root(), "gen-data --n 50 --resolution 64 --seed 7 --out d50").code != 0);
  const auto forced = run(ws().root(), "gen-data --n 50 --resolution 64 --seed 7 --out d50 --force");
  CHECK(forced.code == 0);
  CHECK(read_file(ws().root() / "d50" / hmap::kManifestName) == manifest);
  CHECK(hmap::verify_dataset(ws().root() / "d50", m));
}

TEST_CASE("gen-data rejects unsupported arguments") {
  const auto r48 = run(ws().root(), "gen-data --n 10 --resolution 48 --out bad");
  CHECK(r48.code != 0);
  CHECK(contains(r48.err, "48"));
  CHECK(run(ws().root(), "gen-data --n 9 --resolution 32 --out bad").code != 0);
  CHECK_FALSE(fs::exists(ws().root() / "bad" / hmap::kManifestName));
}

TEST_CASE("output paths honor HMAP_OUTPUT_ROOT") {
  fs::create_directories(ws().root() / "outroot");
  const auto r = run(ws().root(), "gen-data --n 10 --resolution 32 --out rooted",
                     "HMAP_OUTPUT_ROOT=" + quote((ws().root() / "outroot").string()));
  CHECK(r.code == 0);
  CHECK(fs::exists(ws().root() / "outroot" / "rooted" / hmap::kManifestName));
  CHECK_FALSE(fs::exists(ws().root() / "rooted"));
}

TEST_CASE("the smoke configuration trains in under five minutes") {
  ws().ensure_smoke();
  MESSAGE("smoke training took " << ws().smoke_seconds << " s");
  CHECK(ws().smoke_seconds < 300.0);
  for (const char* f : {"config.json", "train_log.jsonl", "final_metrics.json", "checkpoints/last.ckpt",
                        "checkpoints/best.ckpt"}) {
    CHECK_MESSAGE(fs::exists(ws().root() / "smoke" / f), f);
  }
  CHECK(epoch_lines(ws().root() / "smoke" / "train_log.jsonl").size() == 2);
}

TEST_CASE("a config with a missing key is rejected by name") {
  ws().ensure_data();
  json j = json::parse(read_file(std::string(HMAP_SOURCE_DIR) + "/configs/smoke.json"));
  j["loss"].erase("alpha_l2");
  std::ofstream(ws().root() / "broken.json") << j.dump(2);
  const auto r = run(ws().root(), "train --data data --out broken --config broken.json");
  CHECK(r.code != 0);
  CHECK(contains(r.err, "loss.alpha_l2"));
}

TEST_CASE("resuming continues the uninterrupted trajectory") {
  ws().ensure_smoke();
  REQUIRE(run(ws().root(), "train --data data --out half --config " + smoke_config() + " --epochs 1").code == 0);
  const auto r = run(ws().root(), "train --data data --out resumed --resume half/checkpoints/last.ckpt --epochs 2");
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "resuming"));
  const auto straight = epoch_lines(ws().root() / "smoke" / "train_log.jsonl");
  const auto first = epoch_lines(ws().root() / "half" / "train_log.jsonl");
  const auto second = epoch_lines(ws().root() / "resumed" / "train_log.jsonl");
  REQUIRE(straight.size() == 2);
  REQUIRE(first.size() == 1);
  REQUIRE(second.size() == 1);
  CHECK(first[0] == straight[0]);
  CHECK(second[0] == straight[1]);
}

TEST_CASE("infer is deterministic per seed and validates its input") {
  ws().ensure_smoke();
  const auto m = hmap::read_manifest(ws().root() / "data");
  const std::string fundus = quote((ws().root() / "data" / m.entries[0].fundus).string());
  const std::string ckpt = " --ckpt smoke/checkpoints/last.ckpt";
  REQUIRE(run(ws().root(), "infer" + ckpt + " --fundus " + fundus + " --out a/pred.png --seed 3").code == 0);
  REQUIRE(run(ws().root(), "infer" + ckpt + " --fundus " + fundus + " --out b/pred.png --seed 3").code == 0);
  CHECK(read_file(ws().root() / "a" / "pred.png") == read_file(ws().root() / "b" / "pred.png"));
  CHECK(read_file(ws().root() / "a" / "pred.csv") == read_file(ws().root() / "b" / "pred.csv"));
  const auto pred = hmap::read_png(ws().root() / "a" / "pred.png");
  CHECK(pred.shape() == hmap::Shape{3, 32, 32});

  hmap::write_png(ws().root() / "gray.png", hmap::Image(hmap::Shape{1, 32, 32}, 0.5f));
  const auto gray = run(ws().root(), "infer" + ckpt + " --fundus gray.png --out c.png");
  CHECK(gray.code != 0);
  CHECK(contains(gray.err, "RGB"));

  hmap::write_png(ws().root() / "big.png", hmap::Image(hmap::Shape{3, 64, 64}, 0.5f));
  const auto big = run(ws().root(), "infer" + ckpt + " --fundus big.png --out c.png");
  CHECK(big.code != 0);
  CHECK(contains(big.err, "64x64"));

  CHECK(run(ws().root(), "infer --ckpt missing.ckpt --fundus " + fundus + " --out c.png").code != 0);
}

TEST_CASE("evaluate: ground-truth self-check, column means and byte-identical reruns") {
  ws().ensure_smoke();
  const std::string base = "evaluate --ckpt smoke/checkpoints/last.ckpt --data data --split val";
  const auto self = run(ws().root(), base + " --out gt --ground-truth");
  REQUIRE(self.code == 0);
  const json gt = json::parse(read_file(ws().root() / "gt" / "metrics.json"));
  CHECK(gt["aggregate"]["ssim"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(gt["aggregate"]["mse"].get<double>() == 0.0);
  CHECK(gt["aggregate"]["lpips"].get<double>() == 0.0);
  CHECK(gt["aggregate"]["psnr_db"] == "inf");

  const auto a = run(ws().root(), base + " --out ev1");
  const auto b = run(ws().root(), base + " --out ev2");
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(contains(a.out, "SSIM |  PSNR(dB) |     LPIPS |       MSE"));
  CHECK(read_file(ws().root() / "ev1" / "metrics.json") == read_file(ws().root() / "ev2" / "metrics.json"));
  CHECK(read_file(ws().root() / "ev1" / "per_image.csv") == read_file(ws().root() / "ev2" / "per_image.csv"));

  const json rep = json::parse(read_file(ws().root() / "ev1" / "metrics.json"));
  REQUIRE(rep["per_image"].size() == 4);
  for (const char* col : {"ssim", "psnr_db", "lpips", "mse", "height_mae_um"}) {
    double sum = 0.0;
    for (const auto& row : rep["per_image"]) sum += row[col].get<double>();
    CHECK_MESSAGE(rep["aggregate"][col].get<double>() == doctest::Approx(sum / 4.0).epsilon(1e-14), col);
  }
  CHECK(run(ws().root(), base + " --out ev3 --split nope").code != 0);
}

TEST_CASE("an overfit checkpoint reproduces a training image within MSE 0.02") {
  ws().ensure_data();
  const auto r = run(ws().root(), "train --data data --out overfit --config " + smoke_config() + " --epochs 15");
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto m = hmap::read_manifest(ws().root() / "data");
  const auto* e = m.select(hmap::Split::train).front();
  REQUIRE(run(ws().root(), "infer --ckpt overfit/checkpoints/last.ckpt --fundus " +
                               quote((ws().root() / "data" / e->fundus).string()) + " --out overfit_pred.png")
              .code == 0);
  const auto pred = hmap::read_png(ws().root() / "overfit_pred.png");
  const auto truth = hmap::read_png(ws().root() / "data" / e->height);
  const double mse = hmap::metrics::mse(pred, truth);
  MESSAGE("overfit inference MSE " << mse);
  CHECK(mse < 0.02);
}
