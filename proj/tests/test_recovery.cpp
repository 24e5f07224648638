#include <doctest.h>

#include <chrono>
#include <cmath>

#include "memprobe/error.hpp"
#include "memprobe/metrics.hpp"
#include "memprobe/recovery.hpp"
#include "memprobe/synthetic.hpp"
#include "memprobe/trainer.hpp"
#include "oracles.hpp"

using namespace memprobe;

namespace {

const AutoencoderFn kIdentity = [](std::span<const double> x) { return ImageVector(x.begin(), x.end()); };

double objective(const Vector& x, const Vector& y, const ErasureMask& theta, const Vector& v, double gamma) {
  double data = 0.0, prox = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = (theta.kept(i) ? x[i] : 0.0) - y[i];
    data += r * r;
    prox += (x[i] - v[i]) * (x[i] - v[i]);
  }
  return data + 0.5 * gamma * prox;
}

ErasureMask random_mask(Rng& rng, std::size_t d) {
  std::vector<std::uint8_t> v(d);
  for (auto& b : v) b = rng.uniform() < 0.5 ? 1 : 0;
  return ErasureMask(v);
}

// A tied model with W = the single normalized image as its only row fits
// that image exactly under LeakyReLU.
TiedAutoencoder exact_fit(const Vector& x) {
  const double n = std::sqrt(oracle::naive_matmul(Matrix(1, x.size(), x), Matrix(x.size(), 1, x)).data()[0]);
  Matrix w(1, x.size());
  for (std::size_t i = 0; i < x.size(); ++i) w(0, i) = x[i] / n;
  return {w, Activation::leaky_relu(0.01)};
}

}  // namespace

TEST_CASE("data fidelity hand examples") {
  const ErasureMask erased = ErasureMask::zeros(1);
  CHECK(data_fidelity_update(Vector{0.9}, Vector{0.3}, erased, 1.0)[0] == 0.3);
  const ErasureMask kept = ErasureMask::ones(1);
  CHECK(data_fidelity_update(Vector{0.6}, Vector{0.2}, kept, 2.0)[0] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK_THROWS_AS(data_fidelity_update(Vector{0.6}, Vector{0.2, 0.1}, kept, 2.0), DimensionError);
  CHECK_THROWS_AS(data_fidelity_update(Vector{0.6}, Vector{0.2}, kept, 0.0), InvalidArgument);
}

TEST_CASE("data fidelity output is stationary and beats perturbations") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 1 + rng.below(64);
    const Vector y = oracle::random_vector(rng, d);
    const Vector v = oracle::random_vector(rng, d, -1, 2);
    const ErasureMask theta = random_mask(rng, d);
    const double gamma = rng.uniform(0.01, 5.0);
    const Vector z = data_fidelity_update(y, v, theta, gamma);
    for (std::size_t i = 0; i < d; ++i) {
      const double grad = 2.0 * (theta.kept(i) ? z[i] - y[i] : 0.0) + gamma * (z[i] - v[i]);
      CHECK(std::abs(grad) <= 1e-10);
    }
    const double best = objective(z, y, theta, v, gamma);
    for (int p = 0; p < 50; ++p) {
      Vector zp = z;
      for (auto& c : zp) c += rng.uniform(-1e-3, 1e-3);
      CHECK(objective(zp, y, theta, v, gamma) >= best);
    }
  }
}

TEST_CASE("mask update hand examples and boundaries") {
  CHECK(mask_update(Vector{0.5}, Vector{0.5}).kept(0));
  CHECK_FALSE(mask_update(Vector{0.9}, Vector{0.4}).kept(0));
  CHECK_FALSE(mask_update(Vector{-0.1}, Vector{0.4}).kept(0));
  CHECK(mask_update(Vector{0.8}, Vector{0.4}).kept(0));
  CHECK(mask_update(Vector{0.0}, Vector{0.4}).kept(0));
  CHECK(mask_update(Vector{0.0}, Vector{0.0}).kept(0));
  CHECK_THROWS_AS(mask_update(Vector{0.0}, Vector{0.0, 1.0}), DimensionError);
}

TEST_CASE("mask update equals the brute-force argmin") {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + rng.below(32);
    const Vector y = oracle::random_vector(rng, d);
    const Vector x = oracle::random_vector(rng, d, -0.5, 2.5);
    const ErasureMask h = mask_update(x, y);
    for (std::size_t i = 0; i < d; ++i) {
      const double keep_cost = (x[i] - y[i]) * (x[i] - y[i]);
      const double erase_cost = y[i] * y[i];
      CHECK(h.kept(i) == (keep_cost <= erase_cost));
    }
  }
}

TEST_CASE("admm with identity prior and full mask converges to y") {
  Rng rng(3);
  const Vector y = oracle::random_vector(rng, 20);
  std::vector<AdmmStep> trace;
  const Vector out = admm_solve(kIdentity, y, ErasureMask::ones(20), 0.5, 200, &trace);
  CHECK(max_abs_diff(out, y) <= 1e-9);
  REQUIRE(trace.size() == 200);
  double previous = 1e300;
  for (std::size_t k = 1; k < trace.size(); ++k) {
    double dist = 0.0;
    for (std::size_t i = 0; i < 20; ++i) dist = std::max(dist, std::abs(trace[k].xi_hat[i] - y[i]));
    CHECK(dist <= previous + 1e-15);
    previous = dist;
  }
  // (y, y, 0) is a fixed point of one more sweep.
  const Vector z = data_fidelity_update(y, y, ErasureMask::ones(20), 0.5);
  CHECK(max_abs_diff(z, y) <= 1e-15);
}

TEST_CASE("admm with constant prior and empty mask returns the constant") {
  const Vector c{0.25, 0.75, 0.5};
  const AutoencoderFn constant = [&](std::span<const double>) { return c; };
  std::vector<AdmmStep> trace;
  const Vector out = admm_solve(constant, Vector{0.9, 0.1, 0.3}, ErasureMask::zeros(3), 1.0, 10, &trace);
  CHECK(out == c);
  CHECK(trace[0].v_hat == c);
  for (std::size_t k = 1; k < trace.size(); ++k)
    for (double u : trace[k].u) CHECK(u == 0.0);
}

TEST_CASE("admm follows the documented update order") {
  Rng rng(4);
  const Matrix a = oracle::random_matrix(rng, 6, 6, -0.3, 0.3);
  const AutoencoderFn f = [&](std::span<const double> x) { return matvec(a, x); };
  const Vector y = oracle::random_vector(rng, 6);
  const ErasureMask theta = random_mask(rng, 6);
  const double gamma = 0.7;
  std::vector<AdmmStep> trace;
  const Vector out = admm_solve(f, y, theta, gamma, 5, &trace);

  Vector v(6, 0.0), u(6, 0.0), xi;
  for (int k = 0; k < 5; ++k) {
    Vector vt(6);
    for (std::size_t i = 0; i < 6; ++i) vt[i] = v[i] - u[i];
    xi.assign(6, 0.0);
    for (std::size_t i = 0; i < 6; ++i)
      xi[i] = theta.kept(i) ? (2 * y[i] + gamma * vt[i]) / (2 + gamma) : vt[i];
    Vector xt(6);
    for (std::size_t i = 0; i < 6; ++i) xt[i] = xi[i] + u[i];
    v = f(xt);
    for (std::size_t i = 0; i < 6; ++i) u[i] += xi[i] - v[i];
    CHECK(max_abs_diff(trace[k].xi_hat, xi) <= 1e-15);
    CHECK(max_abs_diff(trace[k].u, u) <= 1e-15);
  }
  CHECK(max_abs_diff(out, xi) <= 1e-15);
}

TEST_CASE("admm reports non-finite iterates with their index") {
  int calls = 0;
  const AutoencoderFn blowup = [&](std::span<const double> x) {
    ++calls;
    Vector out(x.begin(), x.end());
    if (calls == 3) out[0] = std::nan("");
    return out;
  };
  try {
    admm_solve(blowup, Vector{0.1, 0.2}, ErasureMask::ones(2), 1.0, 10);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("iteration 3") != std::string::npos);
  }
}

TEST_CASE("recovery config validation") {
  RecoveryConfig c;
  CHECK_NOTHROW(c.validate());
  c.gamma = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = RecoveryConfig{};
  c.admm_iters = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = RecoveryConfig{};
  c.mask_init = MaskInit::FromMask;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  CHECK(mask_init_from_string("zeros") == MaskInit::Zeros);
  CHECK_THROWS_AS(mask_init_from_string("ones"), InvalidArgument);
}

TEST_CASE("default gamma table") {
  CHECK(default_gamma(10, ActivationKind::LeakyReLU) == 0.5);
  CHECK(default_gamma(20, ActivationKind::LeakyReLU) == 0.1);
  CHECK(default_gamma(10, ActivationKind::PReLU) == 0.1);
  CHECK(default_gamma(4, ActivationKind::Softplus) == 1.0);
}

TEST_CASE("unknown-H recovery of an exactly fitted image") {
  const Vector x = synthetic_images(0, 1, 6, 6, 1, 42)[0];
  const Model model = exact_fit(x);
  CHECK(mse(forward(model, x), x) <= 1e-30);
  const AutoencoderFn f = as_function(model);

  RecoveryConfig cfg;
  cfg.gamma = 1.0;
  const auto clean = recover_unknown_h(f, x, cfg, std::span<const double>(x));
  CHECK(mse(clean.estimate, x) <= 1e-7);
  CHECK(clean.converged);
  CHECK(clean.change_trace.size() == clean.outer_iters);
  CHECK(clean.truth_trace.size() == clean.outer_iters);
  CHECK(clean.truth_trace.back() == doctest::Approx(mse(clean.estimate, x)).epsilon(1e-12));

  Rng rng(5);
  const ErasureMask h = random_mask(rng, x.size());
  const Vector y = h.apply(x);
  const auto r1 = recover_unknown_h(f, y, cfg);
  const auto r2 = recover_unknown_h(f, y, cfg);
  CHECK(r1.estimate == r2.estimate);
  CHECK(r1.mask_estimate == r2.mask_estimate);
  CHECK(mse(r1.estimate, x) <= 1e-7);
}

TEST_CASE("unknown-H stops at the outer cap") {
  const AutoencoderFn flip = [](std::span<const double> x) {
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = 1.0 - x[i];
    return out;
  };
  RecoveryConfig cfg;
  cfg.max_outer = 7;
  const auto r = recover_unknown_h(flip, Vector{0.2, 0.9, 0.4}, cfg);
  CHECK(r.outer_iters <= 7);
  CHECK(r.change_trace.size() == r.outer_iters);
}

TEST_CASE("mask initialisations") {
  RecoveryConfig cfg;
  cfg.max_outer = 1;
  cfg.mask_init = MaskInit::Zeros;
  const Vector y{0.2, 0.4, 0.6};
  // Zero mask with the identity prior leaves every coordinate at the prior.
  const auto r = recover_unknown_h(kIdentity, y, cfg);
  CHECK(r.outer_iters == 1);
  cfg.mask_init = MaskInit::FromMask;
  cfg.initial_mask = ErasureMask::ones(3);
  CHECK(max_abs_diff(recover_unknown_h(kIdentity, y, cfg).estimate, y) < 1e-6);
  cfg.initial_mask = ErasureMask::ones(2);
  CHECK_THROWS_AS(recover_unknown_h(kIdentity, y, cfg), DimensionError);
}

TEST_CASE("known-H variant") {
  Rng rng(6);
  const Vector y = oracle::random_vector(rng, 10);
  const Matrix a = oracle::random_matrix(rng, 10, 10, -0.1, 0.1);
  const AutoencoderFn f = [&](std::span<const double> x) { return matvec(a, x); };
  RecoveryConfig cfg;
  const auto all = recover_known_h(f, y, ErasureMask::ones(10), cfg, true);
  CHECK(all.estimate == y);
  const auto none = recover_known_h(f, y, ErasureMask::zeros(10), cfg, true);
  CHECK(none.estimate == admm_solve(f, y, ErasureMask::zeros(10), cfg.gamma, cfg.admm_iters));
  const ErasureMask h = random_mask(rng, 10);
  const auto noisy = recover_known_h(f, y, h, cfg, false);
  CHECK(noisy.estimate == admm_solve(f, y, h, cfg.gamma, cfg.admm_iters));
  CHECK(noisy.outer_iters == 1);
}

TEST_CASE("baseline iteration") {
  const Vector y{0.1, 0.5, 0.9};
  const auto r = baseline_iterate(kIdentity, y);
  CHECK(r.estimate == y);
  CHECK(r.outer_iters == 1);
  CHECK(r.converged);

  const AutoencoderFn half = [](std::span<const double> x) {
    Vector out(x.begin(), x.end());
    for (auto& v : out) v *= 0.5;
    return out;
  };
  const auto h = baseline_iterate(half, y, 5, 0.0, std::span<const double>(y));
  CHECK(h.outer_iters == 5);
  CHECK_FALSE(h.converged);
  CHECK(h.estimate[2] == doctest::Approx(0.9 / 32));
  CHECK(h.truth_trace.size() == 5);

  const AutoencoderFn bad = [](std::span<const double> x) { return Vector(x.size(), INFINITY); };
  CHECK_THROWS_AS(baseline_iterate(bad, y), NumericalError);
}
