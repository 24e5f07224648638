#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "memprobe/autoencoder.hpp"
#include "memprobe/degradation.hpp"

namespace memprobe {

enum class MaskInit { Zeros, BernoulliHalf, FromMask };

MaskInit mask_init_from_string(const std::string& name);
std::string to_string(MaskInit init);

// Knobs of the alternating recovery. The data-fidelity and mask-prior
// weights have no runtime parameter: the plug-in autoencoder replaces the
// prior step wholesale and the 0/1 indicator makes the mask weight moot.
struct RecoveryConfig {
  double gamma = 0.5;
  std::size_t admm_iters = 40;
  double outer_tol = 1e-9;
  std::size_t patience = 3;
  std::size_t max_outer = 200;
  MaskInit mask_init = MaskInit::BernoulliHalf;
  // Seed of the Bernoulli(1/2) initial mask; batch drivers pass a per-sample
  // derived seed.
  std::uint64_t seed = 42;
  std::optional<ErasureMask> initial_mask;  // required for FromMask

  void validate() const;
};

// γ per architecture: 0.5 for the 10-layer FC LeakyReLU model, 0.1 for
// PReLU or deeper FC models, 1.0 otherwise.
double default_gamma(std::size_t fc_layers, ActivationKind activation);
double default_gamma(const Model& model);

struct RecoveryResult {
  ImageVector estimate;
  ErasureMask mask_estimate;
  std::size_t outer_iters = 0;
  bool converged = false;
  // (1/d)‖x̂⁽ᵗ⁾ − x̂⁽ᵗ⁻¹⁾‖² per iteration, with x̂⁽⁰⁾ = y.
  std::vector<double> change_trace;
  // (1/d)‖x̂⁽ᵗ⁾ − x‖² per iteration when the ground truth is supplied.
  std::vector<double> truth_trace;
};

// One inner iteration's iterates, recorded when a trace is requested.
struct AdmmStep {
  ImageVector xi_hat;
  ImageVector v_hat;
  ImageVector u;  // u⁽ᵏ⁺¹⁾
};

// argmin_x ‖Θx − y‖² + (γ/2)‖x − ṽ‖², componentwise.
ImageVector data_fidelity_update(std::span<const double> y, std::span<const double> v_tilde, const ErasureMask& theta,
                                 double gamma);

// Plug-and-play ADMM for a fixed mask estimate: exactly `iters` rounds,
// returns the last data-fidelity iterate. Throws NumericalError naming the
// iteration when an iterate stops being finite.
ImageVector admm_solve(const AutoencoderFn& f, std::span<const double> y, const ErasureMask& theta, double gamma,
                       std::size_t iters, std::vector<AdmmStep>* trace = nullptr);

// Per-coordinate minimizer over {0,1} of the mask objective: erase where
// x̂ > 2y or x̂ < 0, keep otherwise (ties keep).
ErasureMask mask_update(std::span<const double> x_hat, std::span<const double> y);

RecoveryResult recover_unknown_h(const AutoencoderFn& f, std::span<const double> y, const RecoveryConfig& config,
                                 std::optional<std::span<const double>> truth = std::nullopt);

// Single ADMM solve with the true mask. With `noiseless`, kept pixels are
// then copied from y.
RecoveryResult recover_known_h(const AutoencoderFn& f, std::span<const double> y, const ErasureMask& h,
                               const RecoveryConfig& config, bool noiseless,
                               std::optional<std::span<const double>> truth = std::nullopt);

// x⁽⁰⁾ = y, x⁽ᵏ⁾ = f(x⁽ᵏ⁻¹⁾) until the per-step MSE change drops below tol.
RecoveryResult baseline_iterate(const AutoencoderFn& f, std::span<const double> y, std::size_t max_iters = 1000,
                                double tol = 1e-12, std::optional<std::span<const double>> truth = std::nullopt);

}  // namespace memprobe
