#include "memprobe/recovery.hpp"

#include <cmath>
#include <string>

#include "memprobe/error.hpp"
#include "memprobe/metrics.hpp"

namespace memprobe {

MaskInit mask_init_from_string(const std::string& name) {
  if (name == "zeros") return MaskInit::Zeros;
  if (name == "bernoulli_half" || name == "random") return MaskInit::BernoulliHalf;
  if (name == "from_mask") return MaskInit::FromMask;
  throw InvalidArgument("unknown mask init '" + name + "'");
}

std::string to_string(MaskInit init) {
  switch (init) {
    case MaskInit::Zeros: return "zeros";
    case MaskInit::BernoulliHalf: return "bernoulli_half";
    case MaskInit::FromMask: return "from_mask";
  }
  return "unknown";
}

void RecoveryConfig::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InvalidArgument("recovery: gamma must be positive");
  if (admm_iters < 1) throw InvalidArgument("recovery: admm_iters must be >= 1");
  if (!(outer_tol > 0.0)) throw InvalidArgument("recovery: outer_tol must be positive");
  if (patience < 1) throw InvalidArgument("recovery: patience must be >= 1");
  if (max_outer < 1) throw InvalidArgument("recovery: max_outer must be >= 1");
  if (mask_init == MaskInit::FromMask && !initial_mask) {
    throw InvalidArgument("recovery: mask_init=from_mask needs an initial mask");
  }
}

double default_gamma(std::size_t fc_layers, ActivationKind activation) {
  if (fc_layers >= 20 || activation == ActivationKind::PReLU) return 0.1;
  if (fc_layers == 10 && activation == ActivationKind::LeakyReLU) return 0.5;
  return 1.0;
}

double default_gamma(const Model& model) {
  if (const auto* deep = std::get_if<AutoencoderModel>(&model)) {
    const auto& layers = deep->layers();
    ActivationKind kind = ActivationKind::Identity;
    if (!layers.empty() && layers.front().activation) kind = layers.front().activation->kind;
    return default_gamma(layers.size(), kind);
  }
  return 1.0;
}

ImageVector data_fidelity_update(std::span<const double> y, std::span<const double> v_tilde, const ErasureMask& theta,
                                 double gamma) {
  if (y.size() != v_tilde.size() || y.size() != theta.size()) {
    throw DimensionError("data_fidelity_update: length mismatch");
  }
  if (!(gamma > 0.0)) throw InvalidArgument("data_fidelity_update: gamma must be positive");
  const double half = 0.5 * gamma;
  ImageVector out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    out[i] = theta.kept(i) ? (y[i] + half * v_tilde[i]) / (1.0 + half) : v_tilde[i];
  }
  return out;
}

namespace {

void require_finite(std::span<const double> v, const char* what, std::size_t iteration) {
  if (!all_finite(v)) {
    throw NumericalError(std::string("admm_solve: non-finite ") + what + " at iteration " + std::to_string(iteration));
  }
}

}  // namespace

ImageVector admm_solve(const AutoencoderFn& f, std::span<const double> y, const ErasureMask& theta, double gamma,
                       std::size_t iters, std::vector<AdmmStep>* trace) {
  const std::size_t d = y.size();
  if (theta.size() != d) throw DimensionError("admm_solve: mask length differs from observation");
  if (iters < 1) throw InvalidArgument("admm_solve: need at least one iteration");

  ImageVector v_hat(d, 0.0);
  ImageVector u(d, 0.0);
  ImageVector v_tilde(d);
  ImageVector xi_tilde(d);
  ImageVector xi_hat;
  if (trace) trace->clear();

  for (std::size_t k = 1; k <= iters; ++k) {
    for (std::size_t i = 0; i < d; ++i) v_tilde[i] = v_hat[i] - u[i];
    xi_hat = data_fidelity_update(y, v_tilde, theta, gamma);
    require_finite(xi_hat, "data-fidelity iterate", k);
    for (std::size_t i = 0; i < d; ++i) xi_tilde[i] = xi_hat[i] + u[i];
    v_hat = f(xi_tilde);
    if (v_hat.size() != d) throw DimensionError("admm_solve: autoencoder output length differs from input");
    require_finite(v_hat, "autoencoder output", k);
    for (std::size_t i = 0; i < d; ++i) u[i] += xi_hat[i] - v_hat[i];
    require_finite(u, "dual variable", k);
    if (trace) trace->push_back({xi_hat, v_hat, u});
  }
  return xi_hat;
}

ErasureMask mask_update(std::span<const double> x_hat, std::span<const double> y) {
  if (x_hat.size() != y.size()) throw DimensionError("mask_update: length mismatch");
  std::vector<std::uint8_t> diag(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    diag[i] = (x_hat[i] > 2.0 * y[i] || x_hat[i] < 0.0) ? 0 : 1;
  }
  return ErasureMask(std::move(diag));
}

namespace {

void record(RecoveryResult& r, std::optional<std::span<const double>> truth, double change) {
  r.change_trace.push_back(change);
  if (truth) r.truth_trace.push_back(mse(r.estimate, *truth));
}

void check_truth(std::optional<std::span<const double>> truth, std::size_t d) {
  if (truth && truth->size() != d) throw DimensionError("recovery: ground truth length differs from observation");
}

}  // namespace

RecoveryResult recover_unknown_h(const AutoencoderFn& f, std::span<const double> y, const RecoveryConfig& config,
                                 std::optional<std::span<const double>> truth) {
  config.validate();
  const std::size_t d = y.size();
  check_truth(truth, d);

  ErasureMask h_hat;
  switch (config.mask_init) {
    case MaskInit::Zeros: h_hat = ErasureMask::zeros(d); break;
    case MaskInit::BernoulliHalf: {
      Rng rng(config.seed);
      std::vector<std::uint8_t> diag(d);
      for (auto& v : diag) v = rng.uniform() < 0.5 ? 1 : 0;
      h_hat = ErasureMask(std::move(diag));
      break;
    }
    case MaskInit::FromMask:
      if (config.initial_mask->size() != d) throw DimensionError("recovery: initial mask length differs");
      h_hat = *config.initial_mask;
      break;
  }

  RecoveryResult r;
  ImageVector previous(y.begin(), y.end());
  std::size_t quiet = 0;
  for (std::size_t t = 1; t <= config.max_outer; ++t) {
    r.estimate = admm_solve(f, y, h_hat, config.gamma, config.admm_iters);
    h_hat = mask_update(r.estimate, y);
    const double change = mse(r.estimate, previous);
    record(r, truth, change);
    r.outer_iters = t;
    previous = r.estimate;
    quiet = change < config.outer_tol ? quiet + 1 : 0;
    if (quiet >= config.patience) {
      r.converged = true;
      break;
    }
  }
  r.mask_estimate = std::move(h_hat);
  return r;
}

RecoveryResult recover_known_h(const AutoencoderFn& f, std::span<const double> y, const ErasureMask& h,
                               const RecoveryConfig& config, bool noiseless,
                               std::optional<std::span<const double>> truth) {
  config.validate();
  if (h.size() != y.size()) throw DimensionError("recover_known_h: mask length differs from observation");
  check_truth(truth, y.size());

  RecoveryResult r;
  r.estimate = admm_solve(f, y, h, config.gamma, config.admm_iters);
  if (noiseless) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (h.kept(i)) r.estimate[i] = y[i];
    }
  }
  r.mask_estimate = h;
  r.outer_iters = 1;
  r.converged = true;
  record(r, truth, mse(r.estimate, y));
  return r;
}

RecoveryResult baseline_iterate(const AutoencoderFn& f, std::span<const double> y, std::size_t max_iters, double tol,
                                std::optional<std::span<const double>> truth) {
  if (max_iters < 1) throw InvalidArgument("baseline_iterate: max_iters must be >= 1");
  if (!(tol >= 0.0)) throw InvalidArgument("baseline_iterate: tol must be nonnegative");
  check_truth(truth, y.size());

  RecoveryResult r;
  r.estimate.assign(y.begin(), y.end());
  r.mask_estimate = ErasureMask::ones(y.size());
  for (std::size_t k = 1; k <= max_iters; ++k) {
    ImageVector next = f(r.estimate);
    if (next.size() != y.size()) throw DimensionError("baseline_iterate: autoencoder output length differs");
    if (!all_finite(next)) {
      throw NumericalError("baseline_iterate: non-finite iterate at step " + std::to_string(k));
    }
    const double change = mse(next, r.estimate);
    r.estimate = std::move(next);
    record(r, truth, change);
    r.outer_iters = k;
    if (change < tol) {
      r.converged = true;
      break;
    }
  }
  return r;
}

}  // namespace memprobe
