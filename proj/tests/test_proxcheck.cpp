#include <doctest.h>

#include <cmath>

#include "memprobe/error.hpp"
#include "memprobe/proxcheck.hpp"
#include "memprobe/trainer.hpp"
#include "oracles.hpp"

using namespace memprobe;

TEST_CASE("numeric jacobian of simple maps") {
  Rng rng(1);
  const Vector x = oracle::random_vector(rng, 5);
  const Matrix id = numeric_jacobian([](std::span<const double> v) { return Vector(v.begin(), v.end()); }, x, 1e-5);
  CHECK(max_abs_diff(id.data(), Matrix::identity(5).data()) <= 1e-10);

  const Matrix a = oracle::random_matrix(rng, 5, 5);
  const Matrix ja = numeric_jacobian([&](std::span<const double> v) { return matvec(a, v); }, x, 1e-5);
  CHECK(max_abs_diff(ja.data(), a.data()) <= 1e-10);
  CHECK_THROWS_AS(numeric_jacobian([](std::span<const double> v) { return Vector(v.begin(), v.end()); }, x, 0.0),
                  InvalidArgument);
}

TEST_CASE("half identity with softplus is certified") {
  Matrix w = Matrix::identity(4);
  for (auto& v : w.data()) v *= 0.5;
  Rng rng(2);
  const auto probes = default_probe_points(4, 16, rng);
  const auto rep = check_moreau(TiedAutoencoder{w, Activation::softplus()}, probes);
  CHECK(rep.verdict == ProxVerdict::Certified);
  CHECK(rep.premise_activation_ok);
  CHECK(rep.premise_sigma_ok);
  CHECK(rep.sigma_max == doctest::Approx(0.5));
  CHECK(rep.eigen_min >= 0.0);
  CHECK(rep.eigen_max <= 0.25);
  CHECK(rep.jacobian_symmetry_defect == 0.0);
  CHECK(rep.probes == 16);
}

TEST_CASE("doubled identity is a premise violation") {
  Matrix w = Matrix::identity(3);
  for (auto& v : w.data()) v *= 2.0;
  Rng rng(3);
  const auto rep = check_moreau(TiedAutoencoder{w, Activation::identity()}, default_probe_points(3, 4, rng));
  CHECK(rep.verdict == ProxVerdict::PremiseViolated);
  CHECK_FALSE(rep.premise_sigma_ok);
  CHECK(rep.sigma_max == doctest::Approx(2.0));
  CHECK(std::abs(rep.eigen_max - 4.0) <= 1e-6);
}

TEST_CASE("leaky relu fails the differentiability premise") {
  Rng rng(4);
  const auto rep =
      check_moreau(TiedAutoencoder{Matrix::identity(3), Activation::leaky_relu(0.1)}, default_probe_points(3, 4, rng));
  CHECK(rep.verdict == ProxVerdict::PremiseViolated);
  CHECK_FALSE(rep.activation_differentiable);
  CHECK(rep.derivative_min == doctest::Approx(0.1));
  CHECK(rep.derivative_max == 1.0);
}

TEST_CASE("random projected softplus models are certified") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 2 + rng.below(10), m = 1 + rng.below(20);
    TiedAutoencoder ae{oracle::random_matrix(rng, m, d, -2, 2), Activation::softplus(rng.uniform(0.5, 3))};
    ae = project_spectral_norm(ae, 1.0);
    const auto rep = check_moreau(ae, default_probe_points(d, 8, rng));
    CHECK(rep.verdict == ProxVerdict::Certified);
    CHECK(rep.symmetry_bound_ratio <= 1e-8);
    CHECK(rep.analytic_vs_numeric_jacobian_maxerr <= 1e-5);
  }
}

TEST_CASE("certification requires probe points") {
  CHECK_THROWS_AS(check_moreau(TiedAutoencoder{Matrix::identity(2), Activation::softplus()}, {}), InvalidArgument);
  Rng rng(6);
  CHECK_THROWS_AS(default_probe_points(3, 1, rng, {Vector(2, 0.0)}), DimensionError);
  CHECK(default_probe_points(3, 2, rng, {Vector(3, 0.0)}).size() == 3);
}

TEST_CASE("singular values") {
  const Vector s = singular_values(Matrix::diagonal(Vector{3, -2, 1}));
  CHECK(s[0] == doctest::Approx(3));
  CHECK(s[1] == doctest::Approx(2));
  CHECK(s[2] == doctest::Approx(1));
  Rng rng(7);
  const Matrix w = oracle::random_matrix(rng, 4, 9);
  CHECK(singular_values(w).front() == doctest::Approx(power_iteration_sigma_max(w)).epsilon(1e-9));
}

TEST_CASE("singular-value submultiplicativity holds on random triples") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng.below(12), d = 1 + rng.below(12);
    const Matrix w = oracle::random_matrix(rng, m, d);
    const Vector diag = oracle::random_vector(rng, m);
    CHECK(submultiplicativity_gap(w, diag) <= 1e-8);
  }
  CHECK_THROWS_AS(submultiplicativity_gap(Matrix(2, 2), Vector{1.0}), DimensionError);
}

TEST_CASE("verdict names") {
  CHECK(to_string(ProxVerdict::Certified) == "certified");
  CHECK(to_string(ProxVerdict::PremiseViolated) == "premise_violated");
  CHECK(to_string(ProxVerdict::ConclusionViolated) == "conclusion_violated");
  CHECK(to_string(ProxVerdict::OutOfTheoremScope) == "out_of_theorem_scope");
}
