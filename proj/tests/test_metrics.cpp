#include <doctest.h>

#include <cmath>

#include "memprobe/error.hpp"
#include "memprobe/metrics.hpp"
#include "oracles.hpp"

using namespace memprobe;

TEST_CASE("mse examples") {
  const Vector a{0.1, 0.4, 0.9};
  CHECK(mse(a, a) == 0.0);
  Rng rng(1);
  for (std::size_t d : {1u, 7u, 256u}) {
    const Vector x = oracle::random_vector(rng, d);
    Vector y = x;
    for (auto& v : y) v -= 0.1;
    CHECK(mse(x, y) == doctest::Approx(0.01).epsilon(1e-12));
  }
  CHECK_THROWS_AS(mse(Vector{1.0}, Vector{1.0, 2.0}), DimensionError);
}

TEST_CASE("mse matches a naive loop and is symmetric") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng.below(500);
    const Vector a = oracle::random_vector(rng, d), b = oracle::random_vector(rng, d);
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    const double naive = s / static_cast<double>(d);
    CHECK(std::abs(mse(a, b) - naive) <= 1e-16 * naive + 1e-300);
    CHECK(mse(a, b) == mse(b, a));
    CHECK(mse(a, b) >= 0.0);
  }
}

TEST_CASE("psnr anchors") {
  CHECK(std::abs(psnr(1e-7) - 70.0) <= 1e-9);
  CHECK(std::abs(psnr(5e-4) - 33.0103) <= 1e-3);
  CHECK(psnr(1.0) == 0.0);
  CHECK(std::isinf(psnr(0.0)));
  CHECK(psnr(0.0) > 0);
  CHECK_THROWS_AS(psnr(-1e-3), InvalidArgument);
  double previous = INFINITY;
  for (double m = 1e-12; m < 10; m *= 3.7) {
    CHECK(psnr(m) < previous);
    previous = psnr(m);
  }
}

TEST_CASE("summarize examples") {
  const Vector zeros(4, 0.0);
  const auto s = summarize(zeros);
  CHECK(s.accurate_rate == 100.0);
  CHECK(s.approximate_rate == 100.0);
  CHECK(s.average_psnr == kPsnrClampDb);

  const auto mixed = summarize(Vector{1e-8, 1e-3});
  CHECK(mixed.accurate_rate == 50.0);
  CHECK(mixed.approximate_rate == 50.0);
  CHECK(mixed.accurate_count == 1);
  CHECK(mixed.records.size() == 2);
  CHECK(mixed.records[0].accurate);
  CHECK_FALSE(mixed.records[1].approximate);
  CHECK(mixed.average_psnr == doctest::Approx((80.0 + 30.0) / 2));

  // Strict inequality at the thresholds.
  const auto edge = summarize(Vector{1e-7, 5e-4});
  CHECK(edge.accurate_count == 0);
  CHECK(edge.approximate_count == 1);

  CHECK_THROWS_AS(summarize(Vector{}), InvalidArgument);
  CHECK_THROWS_AS(summarize(Vector{-1.0}), InvalidArgument);
}

TEST_CASE("U-Net reference layout formats as a summary") {
  // 78% of 50 samples accurate.
  Vector mses(50, 1e-3);
  for (int i = 0; i < 39; ++i) mses[i] = 1e-9;
  const auto s = summarize(mses);
  CHECK(s.accurate_rate == 78.0);
  CHECK(format_number(s.accurate_rate) == "78");
}

TEST_CASE("rates are monotone in threshold tightness") {
  Rng rng(3);
  Vector mses(200);
  for (auto& m : mses) m = std::pow(10.0, rng.uniform(-10, -1));
  double prev_acc = 101.0;
  for (double t : {1e-1, 1e-3, 1e-5, 1e-7, 1e-9}) {
    EvalThresholds th{t / 10, t};
    const auto s = summarize(mses, th);
    CHECK(s.approximate_rate <= prev_acc);
    CHECK(s.accurate_rate <= s.approximate_rate);
    prev_acc = s.approximate_rate;
  }
  CHECK_THROWS_AS((EvalThresholds{1e-3, 1e-4}.validate()), InvalidArgument);
}

TEST_CASE("format_number") {
  CHECK(format_number(INFINITY) == "inf");
  CHECK(format_number(0.5) == "0.5");
  CHECK(std::stod(format_number(0.1 + 0.2)) == 0.1 + 0.2);
}
