#include "memprobe/autoencoder.hpp"

#include <algorithm>
#include <cmath>

#include "memprobe/error.hpp"

namespace memprobe {

std::string to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::Identity: return "identity";
    case ActivationKind::LeakyReLU: return "leaky_relu";
    case ActivationKind::PReLU: return "prelu";
    case ActivationKind::Softplus: return "softplus";
  }
  return "unknown";
}

ActivationKind activation_kind_from_string(const std::string& name) {
  if (name == "identity") return ActivationKind::Identity;
  if (name == "leaky_relu" || name == "lrelu") return ActivationKind::LeakyReLU;
  if (name == "prelu") return ActivationKind::PReLU;
  if (name == "softplus") return ActivationKind::Softplus;
  throw InvalidArgument("unknown activation '" + name + "'");
}

Activation Activation::leaky_relu(double slope) {
  if (!(slope > 0.0 && slope <= 1.0)) throw InvalidArgument("leaky_relu slope must lie in (0,1]");
  return {ActivationKind::LeakyReLU, slope};
}

Activation Activation::prelu(double initial_slope) {
  if (!std::isfinite(initial_slope)) throw InvalidArgument("prelu slope must be finite");
  return {ActivationKind::PReLU, initial_slope};
}

Activation Activation::softplus(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidArgument("softplus beta must be positive");
  return {ActivationKind::Softplus, beta};
}

static double logistic(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double Activation::apply(double z) const {
  switch (kind) {
    case ActivationKind::Identity: return z;
    case ActivationKind::LeakyReLU:
    case ActivationKind::PReLU: return z >= 0.0 ? z : param * z;
    case ActivationKind::Softplus: {
      const double t = param * z;
      if (t > 0.0) return z + std::log1p(std::exp(-t)) / param;
      return std::log1p(std::exp(t)) / param;
    }
  }
  return z;
}

double Activation::deriv(double z) const {
  switch (kind) {
    case ActivationKind::Identity: return 1.0;
    case ActivationKind::LeakyReLU:
    case ActivationKind::PReLU: return z >= 0.0 ? 1.0 : param;
    case ActivationKind::Softplus: return logistic(param * z);
  }
  return 1.0;
}

Vector Activation::apply(std::span<const double> z) const {
  Vector out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = apply(z[i]);
  return out;
}

Vector Activation::deriv(std::span<const double> z) const {
  Vector out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = deriv(z[i]);
  return out;
}

bool Activation::differentiable() const {
  return kind == ActivationKind::Identity || kind == ActivationKind::Softplus;
}

Vector DenseLayer::affine(std::span<const double> x) const {
  Vector z = matvec(weight, x);
  if (has_bias()) {
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += bias[i];
  }
  return z;
}

Vector DenseLayer::forward(std::span<const double> x) const {
  Vector z = affine(x);
  if (activation) {
    for (auto& v : z) v = activation->apply(v);
  }
  return z;
}

AutoencoderModel::AutoencoderModel(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw InvalidArgument("autoencoder needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& layer = layers_[i];
    if (layer.has_bias() && layer.bias.size() != layer.out()) {
      throw DimensionError("layer " + std::to_string(i) + ": bias length differs from output width");
    }
    if (i > 0 && layers_[i - 1].out() != layer.in()) {
      throw DimensionError("layer " + std::to_string(i) + ": input width does not match previous output");
    }
  }
  if (layers_.front().in() != layers_.back().out()) {
    throw DimensionError("autoencoder output width differs from input width");
  }
}

std::size_t AutoencoderModel::input_dim() const { return layers_.empty() ? 0 : layers_.front().in(); }

std::size_t AutoencoderModel::latent_dim() const {
  std::size_t m = input_dim();
  for (const auto& layer : layers_) m = std::min(m, layer.out());
  return m;
}

ImageVector AutoencoderModel::forward(std::span<const double> x) const {
  if (x.size() != input_dim()) {
    throw DimensionError("forward: input has length " + std::to_string(x.size()) + ", model expects " +
                         std::to_string(input_dim()));
  }
  Vector h(x.begin(), x.end());
  for (const auto& layer : layers_) h = layer.forward(h);
  return h;
}

ImageVector TiedAutoencoder::forward(std::span<const double> x) const {
  if (x.size() != input_dim()) throw DimensionError("forward: input length differs from tied model width");
  Vector z = matvec(weight, x);
  for (auto& v : z) v = activation.apply(v);
  return matvec_transposed(weight, z);
}

ImageVector forward(const Model& model, std::span<const double> x) {
  return std::visit([&](const auto& m) { return m.forward(x); }, model);
}

std::size_t input_dim(const Model& model) {
  return std::visit([](const auto& m) { return m.input_dim(); }, model);
}

AutoencoderFn as_function(const Model& model) {
  return [&model](std::span<const double> x) { return forward(model, x); };
}

TiedJacobian tied_jacobian(const TiedAutoencoder& ae, std::span<const double> x) {
  const Matrix& w = ae.weight;
  if (x.size() != w.cols()) throw DimensionError("tied_jacobian: input length differs from model width");
  const Vector z = matvec(w, x);
  const Vector slope = ae.activation.deriv(z);

  TiedJacobian out{Matrix(w.cols(), w.cols()), false};
  if (!ae.activation.differentiable()) {
    out.nondifferentiable = true;
  }
  // J(i,j) = Σ_k W(k,i) ρ'(z_k) W(k,j); upper triangle computed, lower mirrored.
  const std::size_t d = w.cols();
  for (std::size_t k = 0; k < w.rows(); ++k) {
    const auto row = w.row(k);
    const double s = slope[k];
    for (std::size_t i = 0; i < d; ++i) {
      const double a = s * row[i];
      if (a == 0.0) continue;
      for (std::size_t j = i; j < d; ++j) out.jacobian(i, j) += a * row[j];
    }
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j) out.jacobian(i, j) = out.jacobian(j, i);
  return out;
}

std::vector<std::size_t> default_fc_widths(std::size_t d, std::size_t m, std::size_t layers) {
  if (layers < 2 || layers % 2 != 0) throw InvalidArgument("layer count must be even and >= 2");
  if (d == 0 || m == 0) throw InvalidArgument("widths must be positive");
  const std::size_t half = layers / 2;
  std::vector<std::size_t> enc(half + 1);
  const double ratio = std::pow(static_cast<double>(m) / static_cast<double>(d), 1.0 / static_cast<double>(half));
  for (std::size_t i = 0; i <= half; ++i) {
    enc[i] = static_cast<std::size_t>(std::llround(static_cast<double>(d) * std::pow(ratio, static_cast<double>(i))));
  }
  enc.front() = d;
  enc.back() = m;
  std::vector<std::size_t> widths(enc);
  for (std::size_t i = half; i-- > 0;) widths.push_back(enc[i]);
  return widths;
}

AutoencoderModel make_fc_autoencoder(std::span<const std::size_t> widths, const Activation& hidden, Rng& rng) {
  if (widths.size() < 2) throw InvalidArgument("need at least two widths");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l];
    const std::size_t out = widths[l + 1];
    DenseLayer layer{Matrix(out, in), Vector(out, 0.0), std::nullopt};
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    for (auto& v : layer.weight.data()) v = rng.uniform(-bound, bound);
    if (l + 2 < widths.size()) layer.activation = hidden;
    layers.push_back(std::move(layer));
  }
  return AutoencoderModel(std::move(layers));
}

TiedAutoencoder make_tied_autoencoder(std::size_t d, std::size_t m, const Activation& act, Rng& rng) {
  TiedAutoencoder ae{Matrix(m, d), act};
  const double bound = std::sqrt(6.0 / static_cast<double>(d));
  for (auto& v : ae.weight.data()) v = rng.uniform(-bound, bound);
  return ae;
}

}  // namespace memprobe
