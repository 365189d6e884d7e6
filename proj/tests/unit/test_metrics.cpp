#include <doctest.h>

#include <cmath>
#include <limits>

#include "hmap/data/colormap.hpp"
#include "hmap/metrics.hpp"
#include "testkit.hpp"

using namespace testkit;
namespace metrics = hmap::metrics;

namespace {

Array<double> image(Rng& rng, Index h = 16, Index w = 16) { return uniform(Shape{3, h, w}, rng, 0, 1); }

Array<double> plus_noise(const Array<double>& a, double amplitude, Rng& rng) {
  Array<double> out = a;
  const auto noise = uniform(a.shape(), rng);
  for (Index i = 0; i < out.size(); ++i) out[i] += amplitude * noise[i];
  return out;
}

}  // namespace

TEST_CASE("ssim of identical images is 1") {
  Rng rng(1);
  const auto a = image(rng, 11, 11);
  CHECK(metrics::ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  const auto b = image(rng, 40, 23);
  CHECK(metrics::ssim(b, b) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ssim of constant 0 against constant 1 has the closed form") {
  const Array<double> zero(Shape{3, 16, 16}, 0.0), one(Shape{3, 16, 16}, 1.0);
  const double c1 = 1e-4;
  CHECK(metrics::ssim(zero, one) == doctest::Approx(c1 / (1.0 + c1)).epsilon(1e-9));
}

TEST_CASE("ssim matches the sliding-window oracle and is symmetric") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const auto a = image(rng);
    const auto b = image(rng);
    const double got = metrics::ssim(a, b);
    CHECK(std::abs(got - oracle::ssim(to_vec(a), to_vec(b), 3, 16, 16)) < 1e-6);
    CHECK(got == doctest::Approx(metrics::ssim(b, a)).epsilon(1e-14));
    CHECK(got >= -1.0);
    CHECK(got <= 1.0);
  }
}

TEST_CASE("ssim rejects images smaller than the window") {
  const Array<double> small(Shape{3, 10, 16}, 0.5);
  CHECK_THROWS_AS(metrics::ssim(small, small), hmap::ShapeError);
}

TEST_CASE("psnr examples") {
  Rng rng(2);
  const auto a = image(rng);
  CHECK(metrics::psnr(a, a) == std::numeric_limits<double>::infinity());
  CHECK(metrics::psnr_from_mse(0.01) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(metrics::psnr_from_mse(0.0033) == doctest::Approx(24.81).epsilon(1e-3));
  CHECK_THROWS_AS(metrics::psnr(a, image(rng, 16, 17)), hmap::ShapeError);
}

TEST_CASE("mse examples, oracle and symmetry") {
  Rng rng(3);
  const auto a = image(rng);
  const auto b = image(rng);
  CHECK(metrics::mse(a, a) == 0.0);
  CHECK(metrics::mse(Array<double>(Shape{3, 4, 4}, 0.0), Array<double>(Shape{3, 4, 4}, 1.0)) == 1.0);
  CHECK(std::abs(metrics::mse(a, b) - oracle::mse(to_vec(a), to_vec(b))) < 1e-7);
  CHECK(metrics::mse(a, b) == metrics::mse(b, a));
  CHECK(metrics::psnr(a, b) == metrics::psnr(b, a));
  CHECK_THROWS_AS(metrics::mse(a, image(rng, 16, 15)), hmap::ShapeError);
}

TEST_CASE("mse grows with the noise amplitude") {
  Rng rng(4);
  const auto a = image(rng, 32, 32);
  double previous = 0.0;
  for (double amplitude : {0.01, 0.05, 0.1}) {
    Rng noise_rng(99);
    const double m = metrics::mse(a, plus_noise(a, amplitude, noise_rng));
    CHECK(m > previous);
    previous = m;
  }
}

TEST_CASE("lpips of a hand-computed single-tap case") {
  // Channel count 1: each position normalizes to its sign.
  const std::vector<Array<double>> a{Array<double>(Shape{1, 1, 1, 2}, {2.0, -3.0})};
  const std::vector<Array<double>> b{Array<double>(Shape{1, 1, 1, 2}, {1.0, 4.0})};
  CHECK(metrics::lpips_from_taps(a, b) == 2.0);
  // Two channels at one position: (3,4)/5 against (0,1).
  const std::vector<Array<double>> c{Array<double>(Shape{1, 2, 1, 1}, {3.0, 4.0})};
  const std::vector<Array<double>> d{Array<double>(Shape{1, 2, 1, 1}, {0.0, 1.0})};
  CHECK(metrics::lpips_from_taps(c, d) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(metrics::lpips_from_taps(a, a) == 0.0);
  CHECK_THROWS_AS(metrics::lpips_from_taps(a, c), hmap::ShapeError);
}

TEST_CASE("lpips through the discriminator: identity, symmetry and interpolation monotonicity") {
  Rng rng(5);
  hmap::Discriminator<double> d(hmap::DiscriminatorSpec{}, rng);
  int satisfied = 0;
  const int trials = 100;
  for (int t = 0; t < trials; ++t) {
    const auto x = image(rng, 32, 32);
    const auto a = image(rng, 32, 32);
    const auto b = image(rng, 32, 32);
    Array<double> mid = a;
    for (Index i = 0; i < mid.size(); ++i) mid[i] = 0.5 * (a[i] + b[i]);
    const double same = metrics::lpips(a, a, d, x);
    const double half = metrics::lpips(a, mid, d, x);
    const double full = metrics::lpips(a, b, d, x);
    if (t == 0) {
      CHECK(same == 0.0);
      CHECK(full == doctest::Approx(metrics::lpips(b, a, d, x)).epsilon(1e-12));
      CHECK(full > 0.0);
    }
    if (same <= half && half <= full) ++satisfied;
  }
  INFO(satisfied << " of " << trials);
  CHECK(satisfied >= 95);
}

TEST_CASE("lpips rejects a conditioning image of a different size") {
  Rng rng(6);
  hmap::Discriminator<double> d(hmap::DiscriminatorSpec{}, rng);
  const auto a = image(rng, 32, 32);
  CHECK_THROWS_AS(metrics::lpips(a, a, d, image(rng, 64, 64)), hmap::ShapeError);
}

TEST_CASE("batch metrics agree with the per-image functions") {
  Rng rng(7);
  hmap::Discriminator<double> d(hmap::DiscriminatorSpec{}, rng);
  const auto pred = uniform(Shape{2, 3, 32, 32}, rng, 0, 1);
  const auto truth = uniform(Shape{2, 3, 32, 32}, rng, 0, 1);
  const auto x = uniform(Shape{2, 3, 32, 32}, rng, 0, 1);
  const auto rows = metrics::batch_metrics(pred, truth, x, d);
  REQUIRE(rows.size() == 2);
  const Index per = 3 * 32 * 32;
  auto slice = [&](const Array<double>& a, Index n) {
    return Array<double>(Shape{3, 32, 32}, std::vector<double>(a.data() + n * per, a.data() + (n + 1) * per));
  };
  for (Index n = 0; n < 2; ++n) {
    const auto p = slice(pred, n), t = slice(truth, n), xi = slice(x, n);
    CHECK(rows[static_cast<std::size_t>(n)].ssim == metrics::ssim(p, t));
    CHECK(rows[static_cast<std::size_t>(n)].mse == metrics::mse(p, t));
    CHECK(rows[static_cast<std::size_t>(n)].psnr_db == metrics::psnr(p, t));
    CHECK(rows[static_cast<std::size_t>(n)].lpips == doctest::Approx(metrics::lpips(p, t, d, xi)).epsilon(1e-12));
    CHECK(rows[static_cast<std::size_t>(n)].height_mae_um >= 0.0);
  }
  const auto self = metrics::batch_metrics(truth, truth, x, d);
  CHECK(self[0].mse == 0.0);
  CHECK(self[0].lpips == 0.0);
  CHECK(self[0].height_mae_um == 0.0);
  CHECK(self[0].psnr_db == std::numeric_limits<double>::infinity());
}

TEST_CASE("height error is measured in micrometers after decoding") {
  Rng rng(8);
  hmap::Discriminator<double> d(hmap::DiscriminatorSpec{}, rng);
  hmap::HeightField low{Array<double>(Shape{32, 32}, 100.0)};
  hmap::HeightField high{Array<double>(Shape{32, 32}, 300.0)};
  const auto pred = hmap::encode_height(low).cast<double>().reshaped(Shape{1, 3, 32, 32});
  const auto truth = hmap::encode_height(high).cast<double>().reshaped(Shape{1, 3, 32, 32});
  const auto rows = metrics::batch_metrics(pred, truth, truth, d);
  const double expect = hmap::lut_index_to_height(hmap::height_to_lut_index(300.0)) -
                        hmap::lut_index_to_height(hmap::height_to_lut_index(100.0));
  CHECK(rows[0].height_mae_um == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("aggregate is the arithmetic mean of each column") {
  std::vector<metrics::NamedMetrics> rows{{"a", {0.5, 20.0, 0.01, 0.2, 4.0}}, {"b", {0.7, 30.0, 0.001, 0.4, 2.0}}};
  const auto m = metrics::aggregate(rows);
  CHECK(m.ssim == doctest::Approx(0.6));
  CHECK(m.psnr_db == doctest::Approx(25.0));
  CHECK(m.mse == doctest::Approx(0.0055));
  CHECK(m.lpips == doctest::Approx(0.3));
  CHECK(m.height_mae_um == doctest::Approx(3.0));
}
