#include "memprobe/proxcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "memprobe/error.hpp"

namespace memprobe {

std::string to_string(ProxVerdict verdict) {
  switch (verdict) {
    case ProxVerdict::Certified: return "certified";
    case ProxVerdict::PremiseViolated: return "premise_violated";
    case ProxVerdict::ConclusionViolated: return "conclusion_violated";
    case ProxVerdict::OutOfTheoremScope: return "out_of_theorem_scope";
  }
  return "unknown";
}

Matrix numeric_jacobian(const AutoencoderFn& f, std::span<const double> x, double h) {
  if (!(h > 0.0)) throw InvalidArgument("numeric_jacobian: step must be positive");
  const std::size_t d = x.size();
  Vector probe(x.begin(), x.end());
  Matrix jac;
  for (std::size_t j = 0; j < d; ++j) {
    probe[j] = x[j] + h;
    const Vector plus = f(probe);
    probe[j] = x[j] - h;
    const Vector minus = f(probe);
    probe[j] = x[j];
    if (j == 0) jac = Matrix(plus.size(), d);
    for (std::size_t i = 0; i < plus.size(); ++i) jac(i, j) = (plus[i] - minus[i]) / (2.0 * h);
  }
  return jac;
}

ProxReport check_moreau(const TiedAutoencoder& ae, const std::vector<Vector>& probe_points,
                        const ProxCheckOptions& options) {
  if (probe_points.empty()) throw InvalidArgument("check_moreau: need at least one probe point");
  ProxReport rep;
  rep.probes = probe_points.size();
  const Activation& act = ae.activation;

  // Derivative range on the grid and on the probes' own pre-activations.
  double dmin = std::numeric_limits<double>::infinity();
  double dmax = -std::numeric_limits<double>::infinity();
  auto visit = [&](double z) {
    const double s = act.deriv(z);
    dmin = std::min(dmin, s);
    dmax = std::max(dmax, s);
  };
  const auto steps = static_cast<std::size_t>(std::llround((options.grid_hi - options.grid_lo) / options.grid_step));
  for (std::size_t i = 0; i <= steps; ++i) visit(options.grid_lo + static_cast<double>(i) * options.grid_step);
  for (const auto& x : probe_points) {
    for (double z : matvec(ae.weight, x)) visit(z);
  }
  rep.derivative_min = dmin;
  rep.derivative_max = dmax;
  rep.activation_differentiable = act.differentiable();
  rep.premise_activation_ok = rep.activation_differentiable && dmin >= 0.0 && dmax <= 1.0;

  rep.sigma_max = power_iteration_sigma_max(ae.weight, 500);
  rep.premise_sigma_ok = rep.sigma_max <= 1.0 + options.tol;

  rep.eigen_min = std::numeric_limits<double>::infinity();
  rep.eigen_max = -std::numeric_limits<double>::infinity();
  bool symmetric = true;
  const AutoencoderFn f = [&ae](std::span<const double> x) { return ae.forward(x); };
  for (const auto& x : probe_points) {
    const Matrix jac = tied_jacobian(ae, x).jacobian;
    const double defect = jac.symmetry_defect();
    const double ratio = defect / (1.0 + jac.frobenius_norm());
    rep.jacobian_symmetry_defect = std::max(rep.jacobian_symmetry_defect, defect);
    rep.symmetry_bound_ratio = std::max(rep.symmetry_bound_ratio, ratio);
    if (ratio > options.symmetry_rel_tol) symmetric = false;

    const Vector eig = sym_eig(jac);
    rep.eigen_max = std::max(rep.eigen_max, eig.front());
    rep.eigen_min = std::min(rep.eigen_min, eig.back());

    const Matrix num = numeric_jacobian(f, x, options.fd_step);
    rep.analytic_vs_numeric_jacobian_maxerr =
        std::max(rep.analytic_vs_numeric_jacobian_maxerr, max_abs_diff(jac.data(), num.data()));
  }

  const bool conclusions_ok = symmetric && rep.eigen_min >= -options.tol && rep.eigen_max <= 1.0 + options.tol &&
                              rep.analytic_vs_numeric_jacobian_maxerr <= options.jacobian_tol;
  if (!rep.premise_activation_ok || !rep.premise_sigma_ok) {
    rep.verdict = ProxVerdict::PremiseViolated;
  } else if (!conclusions_ok) {
    rep.verdict = ProxVerdict::ConclusionViolated;
  } else {
    rep.verdict = ProxVerdict::Certified;
  }
  return rep;
}

std::vector<Vector> default_probe_points(std::size_t d, std::size_t count, Rng& rng, const std::vector<Vector>& extra) {
  std::vector<Vector> out;
  for (std::size_t i = 0; i < count; ++i) {
    Vector x(d);
    for (auto& v : x) v = rng.uniform();
    out.push_back(std::move(x));
  }
  for (const auto& x : extra) {
    if (x.size() != d) throw DimensionError("probe point length differs from model width");
    out.push_back(x);
  }
  return out;
}

Vector singular_values(const Matrix& m) {
  const bool wide = m.rows() < m.cols();
  const Matrix gram = wide ? matmul(m, m.transposed()) : matmul(m.transposed(), m);
  Vector s = sym_eig(gram);
  for (auto& v : s) v = std::sqrt(std::max(0.0, v));
  return s;
}

double submultiplicativity_gap(const Matrix& w, std::span<const double> d_diag) {
  if (d_diag.size() != w.rows()) throw DimensionError("submultiplicativity_gap: D size differs from W rows");
  Matrix dw = w;
  for (std::size_t r = 0; r < w.rows(); ++r)
    for (auto& v : dw.row(r)) v *= d_diag[r];
  const Matrix product = matmul(w.transposed(), dw);  // Wᵀ D W, d × d

  // Symmetric, so its singular values are the absolute eigenvalues.
  Vector sp = sym_eig(product);
  for (auto& v : sp) v = std::abs(v);
  std::sort(sp.begin(), sp.end(), std::greater<>());
  const Vector sw = singular_values(w);
  double sigma_d = 0.0;
  for (double v : d_diag) sigma_d = std::max(sigma_d, std::abs(v));
  const double sigma_wt = sw.empty() ? 0.0 : sw.front();

  double gap = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sp.size(); ++i) {
    // σ_i(W) is zero beyond W's rank-bearing dimension.
    const double swi = i < sw.size() ? sw[i] : 0.0;
    gap = std::max(gap, sp[i] - sigma_wt * sigma_d * swi);
  }
  return gap;
}

}  // namespace memprobe
