#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "memprobe/autoencoder.hpp"

namespace memprobe {

enum class ProxVerdict { Certified, PremiseViolated, ConclusionViolated, OutOfTheoremScope };

std::string to_string(ProxVerdict verdict);

struct ProxCheckOptions {
  double tol = 1e-6;             // eigenvalue slack and σ₁ slack
  double fd_step = 1e-5;         // central-difference step
  double jacobian_tol = 1e-5;    // analytic vs numeric Jacobian, max entry
  double symmetry_rel_tol = 1e-8;  // defect ≤ rel_tol·(1 + ‖J‖_F)
  double grid_lo = -50.0;
  double grid_hi = 50.0;
  double grid_step = 1e-3;
};

struct ProxReport {
  // Premise: activation differentiable with derivative in [0,1].
  bool premise_activation_ok = false;
  bool activation_differentiable = false;
  double derivative_min = 0.0;
  double derivative_max = 0.0;
  // Premise: singular values of W in [0,1].
  bool premise_sigma_ok = false;
  double sigma_max = 0.0;
  // Conclusions, worst case over probe points.
  double jacobian_symmetry_defect = 0.0;
  double symmetry_bound_ratio = 0.0;  // defect / (1 + ‖J‖_F), worst case
  double eigen_min = 0.0;
  double eigen_max = 0.0;
  double analytic_vs_numeric_jacobian_maxerr = 0.0;
  std::size_t probes = 0;
  ProxVerdict verdict = ProxVerdict::ConclusionViolated;
};

// Central differences; column j = (f(x + h e_j) − f(x − h e_j)) / (2h).
Matrix numeric_jacobian(const AutoencoderFn& f, std::span<const double> x, double h);

// Certifies a tied model against the proximity-operator conditions: the
// premises (derivative range over a dense pre-activation grid plus the
// probes' actual pre-activations, σ₁(W) by power iteration) and, at every
// probe, a symmetric Jacobian with eigenvalues in [0,1]. Violations are
// reported, never thrown.
ProxReport check_moreau(const TiedAutoencoder& ae, const std::vector<Vector>& probe_points,
                        const ProxCheckOptions& options = {});

// `count` uniform [0,1]^d points followed by any extra points supplied.
std::vector<Vector> default_probe_points(std::size_t d, std::size_t count, Rng& rng,
                                         const std::vector<Vector>& extra = {});

// Singular values, descending, from the eigenvalues of the smaller Gram
// matrix.
Vector singular_values(const Matrix& m);

// Largest violation of σ_i(Wᵀ D W) ≤ σ₁(Wᵀ)·σ₁(D)·σ_i(W) over i (≤ 0 when
// the chain holds). D is given by its diagonal.
double submultiplicativity_gap(const Matrix& w, std::span<const double> d_diag);

}  // namespace memprobe
