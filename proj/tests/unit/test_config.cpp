#include <doctest.h>

#include <fstream>
#include <string>

#include "hmap/train/config.hpp"
#include "testkit.hpp"

using namespace testkit;
using json = nlohmann::json;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const hmap::ConfigError& e) {
    return e.what();
  }
  return "";
}

hmap::RunConfig modified() {
  hmap::RunConfig c;
  c.train.lr0 = 2e-4;
  c.train.epochs = 40;
  c.train.seed = 123456789012345ull;
  c.train.precision = hmap::Precision::f64;
  c.train.resolution = 128;
  c.loss.lambda_per_tap = {1.0, 2.0, 3.0, 0.5};
  c.loss.alpha_perceptual = 0.0;
  c.loss_per_head = false;
  c.generator = hmap::GeneratorSpec::make(3, 16, 64);
  c.generator.noise.mode = hmap::NoiseMode::none;
  c.generator.noise.rate = 0.0;
  c.discriminator.layer_channels = {8, 8, 8, 8, 8, 8, 8, 8, 8};
  c.discriminator.tap_layers = {2, 5, 9};
  c.loss.lambda_per_tap = {1.0, 2.0, 3.0};
  c.validate();
  return c;
}

}  // namespace

TEST_CASE("serialize then parse returns the same configuration") {
  CHECK(hmap::parse_config(hmap::serialize_config(hmap::RunConfig{})) == hmap::RunConfig{});
  const auto c = modified();
  CHECK(hmap::parse_config(hmap::serialize_config(c)) == c);
  CHECK(hmap::serialize_config(hmap::parse_config(hmap::serialize_config(c))) == hmap::serialize_config(c));
}

TEST_CASE("defaults carry the published training recipe") {
  const hmap::RunConfig c;
  CHECK(c.train.lr0 == 1e-3);
  CHECK(c.train.decay == 0.9);
  CHECK(c.train.decay_every == 30);
  CHECK(c.train.batch_size == 8);
  CHECK(c.train.epochs == 250);
  CHECK(c.loss.lambda_per_tap == std::vector<double>{5.0, 1.0, 5.0, 5.0});
  CHECK(c.discriminator.tap_layers == std::vector<int>{1, 4, 6, 8});
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("a missing key is named in full") {
  json j = hmap::to_json(hmap::RunConfig{});
  j["train"].erase("lr0");
  const auto msg = error_of([&] { hmap::run_config_from_json(j); });
  CHECK(msg.find("train.lr0") != std::string::npos);

  j = hmap::to_json(hmap::RunConfig{});
  j["generator"]["noise"].erase("rate");
  CHECK(error_of([&] { hmap::run_config_from_json(j); }).find("generator.noise.rate") != std::string::npos);

  j = hmap::to_json(hmap::RunConfig{});
  j.erase("loss");
  CHECK(error_of([&] { hmap::run_config_from_json(j); }).find("loss") != std::string::npos);
}

TEST_CASE("unknown keys are rejected") {
  json j = hmap::to_json(hmap::RunConfig{});
  j["train"]["learning_rate"] = 0.1;
  CHECK(error_of([&] { hmap::run_config_from_json(j); }).find("train.learning_rate") != std::string::npos);
  j = hmap::to_json(hmap::RunConfig{});
  j["extra"] = 1;
  CHECK(error_of([&] { hmap::run_config_from_json(j); }).find("extra") != std::string::npos);
}

TEST_CASE("wrong types and invalid values are rejected") {
  json j = hmap::to_json(hmap::RunConfig{});
  j["train"]["batch_size"] = "eight";
  CHECK(error_of([&] { hmap::run_config_from_json(j); }).find("train.batch_size") != std::string::npos);
  j = hmap::to_json(hmap::RunConfig{});
  j["train"]["precision"] = "f16";
  CHECK_FALSE(error_of([&] { hmap::run_config_from_json(j); }).empty());
  j = hmap::to_json(hmap::RunConfig{});
  j["loss"]["lambda"] = {1.0, 2.0};
  CHECK_FALSE(error_of([&] { hmap::run_config_from_json(j); }).empty());
  j = hmap::to_json(hmap::RunConfig{});
  j["train"]["resolution"] = 40;
  CHECK(error_of([&] { hmap::run_config_from_json(j); }).find("divisible by 16") != std::string::npos);
  CHECK_FALSE(error_of([] { hmap::parse_config("{ not json"); }).empty());
}

TEST_CASE("config files load from disk and report unreadable paths") {
  TempDir dir("cfg");
  const auto path = (dir.path / "run.json").string();
  std::ofstream(path) << hmap::serialize_config(modified());
  CHECK(hmap::load_config(path) == modified());
  CHECK(error_of([&] { hmap::load_config(path + ".missing"); }).find("run.json.missing") != std::string::npos);
}

TEST_CASE("the shipped example configs parse") {
  for (const char* name : {"configs/default.json", "configs/smoke.json"}) {
    const std::string path = std::string(HMAP_SOURCE_DIR) + "/" + name;
    CHECK_MESSAGE(error_of([&] { hmap::load_config(path); }).empty(), name);
  }
  CHECK(hmap::load_config(std::string(HMAP_SOURCE_DIR) + "/configs/default.json") == hmap::RunConfig{});
}
