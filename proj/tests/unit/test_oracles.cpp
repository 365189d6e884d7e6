#include <doctest.h>

#include <cmath>

#include "hmap/losses.hpp"
#include "testkit.hpp"

using namespace testkit;

TEST_CASE("finite differences of sum(x^2) at [1, 2] give [2, 4]") {
  const auto g = oracle::finite_diff_grad([](const oracle::Vec& x) { return x[0] * x[0] + x[1] * x[1]; }, {1.0, 2.0});
  CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(g[1] == doctest::Approx(4.0).epsilon(1e-8));
}

TEST_CASE("finite differences surface non-finite values") {
  CHECK_THROWS_AS(oracle::finite_diff_grad([](const oracle::Vec& x) { return std::log(x[0]); }, {1e-5}, 1e-4),
                  std::runtime_error);
}

TEST_CASE("relative error uses the 1e-8 floor") {
  CHECK(oracle::relative_error(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(oracle::relative_error(0.0, 1e-10) == doctest::Approx(1e-2));
  CHECK(oracle::relative_error(0.0, 0.0) == 0.0);
}

TEST_CASE("report keeps the worst coordinate per parameter") {
  oracle::GradCheckReport r;
  r.op = "demo";
  r.add("w", {1.0, 2.0, 3.0}, {1.0, 2.2, 3.0});
  r.add("b", {1.0}, {1.0});
  REQUIRE(r.worst.size() == 2);
  CHECK(r.worst[0].index == 1);
  CHECK(r.max_rel_error == doctest::Approx(0.2 / 2.2));
  CHECK(r.describe().find("w[1]") != std::string::npos);
}

TEST_CASE("L2 loss gradient against finite differences at 64-bit") {
  Rng rng(5);
  const auto y = uniform(Shape{2, 3, 4, 4}, rng);
  const auto y_hat = uniform(Shape{2, 3, 4, 4}, rng);
  Tensor<double> t(y_hat, true);
  hmap::backward(hmap::l2_loss(Tensor<double>(y), t));
  const auto numeric = oracle::finite_diff_grad(
      [&](const oracle::Vec& v) {
        return hmap::l2_loss(Tensor<double>(y), Tensor<double>(from_vec<double>(y.shape(), v))).item();
      },
      to_vec(y_hat));
  oracle::GradCheckReport r;
  r.add("y_hat", to_vec(t.grad()), numeric);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("reference convolution with an identity kernel returns the input") {
  Rng rng(2);
  const auto x = uniform(Shape{1, 1, 5, 5}, rng);
  const auto out = oracle::conv2d(to_vec(x), dims_of(x.shape()), {1.0}, 1, 1, {0.0}, 1, 0, nullptr);
  CHECK(out == to_vec(x));
}

TEST_CASE("reference SSIM of an image with itself is 1") {
  Rng rng(3);
  const auto a = to_vec(uniform(Shape{2, 12, 12}, rng, 0, 1));
  CHECK(oracle::ssim(a, a, 2, 12, 12) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("production kernels agree with the oracles") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    for (const auto& c : oracle_comparisons(seed)) {
      INFO(c.name << " seed " << seed << ": error " << c.error << " tolerance " << c.tolerance);
      CHECK(c.pass());
    }
  }
}

TEST_CASE("every op and loss passes the gradient check at both precisions") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (const auto& c : gradient_cases(seed)) {
      const auto r64 = check_grad<double>(c);
      const auto r32 = check_grad<float>(c);
      INFO("seed " << seed << " 64-bit " << r64.describe());
      CHECK(r64.max_rel_error < 1e-5);
      INFO("seed " << seed << " 32-bit " << r32.describe());
      CHECK(r32.max_rel_error < 1e-3);
    }
  }
}

TEST_CASE("generator objective gradients match finite differences for every parameter") {
  for (std::uint64_t seed = 0; seed < 2; ++seed) {
    const auto r64 = generator_objective_check<double>(seed, 1e-5);
    INFO(r64.describe());
    CHECK(r64.max_rel_error < 1e-4);
    const auto r32 = generator_objective_check<float>(seed, 1e-5);
    INFO(r32.describe());
    CHECK(r32.max_rel_error < 1e-2);
  }
}

TEST_CASE("discriminator objective gradients match finite differences for every parameter") {
  const auto r64 = discriminator_objective_check<double>(0, 1e-5);
  INFO(r64.describe());
  CHECK(r64.max_rel_error < 1e-4);
  const auto r32 = discriminator_objective_check<float>(0, 1e-5);
  INFO(r32.describe());
  CHECK(r32.max_rel_error < 1e-2);
}
