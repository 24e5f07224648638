#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "memprobe/numerics.hpp"

namespace memprobe {

// Image data flattened to length d, nominally in [0,1]. Layout for
// multi-channel images is pixel-major (HWC).
using ImageVector = Vector;

enum class ActivationKind : std::uint8_t { Identity = 0, LeakyReLU = 1, PReLU = 2, Softplus = 3 };

std::string to_string(ActivationKind kind);
ActivationKind activation_kind_from_string(const std::string& name);

// Componentwise activation. `param` is the negative slope for LeakyReLU,
// the learnable slope for PReLU and the sharpness β for Softplus.
struct Activation {
  ActivationKind kind = ActivationKind::Identity;
  double param = 0.0;

  static Activation identity() { return {ActivationKind::Identity, 0.0}; }
  static Activation leaky_relu(double slope);
  static Activation prelu(double initial_slope = 0.25);
  static Activation softplus(double beta = 1.0);

  double apply(double z) const;
  double deriv(double z) const;
  Vector apply(std::span<const double> z) const;
  Vector deriv(std::span<const double> z) const;

  // False for the piecewise-linear kinds (kink at 0).
  bool differentiable() const;

  bool operator==(const Activation&) const = default;
};

struct DenseLayer {
  Matrix weight;  // out × in
  Vector bias;    // empty when the layer has no bias
  std::optional<Activation> activation;

  std::size_t in() const { return weight.cols(); }
  std::size_t out() const { return weight.rows(); }
  bool has_bias() const { return !bias.empty(); }

  // Pre-activation W x + b.
  Vector affine(std::span<const double> x) const;
  Vector forward(std::span<const double> x) const;

  bool operator==(const DenseLayer&) const = default;
};

// f = f_dec ∘ f_enc as a stack of dense layers. The bottleneck is the
// narrowest layer output.
class AutoencoderModel {
 public:
  AutoencoderModel() = default;
  explicit AutoencoderModel(std::vector<DenseLayer> layers);

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  std::size_t input_dim() const;
  std::size_t latent_dim() const;

  ImageVector forward(std::span<const double> x) const;

  bool operator==(const AutoencoderModel&) const = default;

 private:
  std::vector<DenseLayer> layers_;
};

// f(x) = Wᵀ ρ(W x). The decoder is always the transpose of the stored
// weight; there is no separate decoder copy and no bias.
struct TiedAutoencoder {
  Matrix weight;  // m × d
  Activation activation;

  std::size_t input_dim() const { return weight.cols(); }
  std::size_t latent_dim() const { return weight.rows(); }

  ImageVector forward(std::span<const double> x) const;

  bool operator==(const TiedAutoencoder&) const = default;
};

using Model = std::variant<AutoencoderModel, TiedAutoencoder>;

// The black-box map the recovery solvers plug in.
using AutoencoderFn = std::function<ImageVector(std::span<const double>)>;

ImageVector forward(const Model& model, std::span<const double> x);
std::size_t input_dim(const Model& model);
AutoencoderFn as_function(const Model& model);

struct TiedJacobian {
  Matrix jacobian;
  // Set for LeakyReLU/PReLU: the formula uses the one-sided derivative at
  // exactly-zero pre-activations.
  bool nondifferentiable = false;
};

// Wᵀ diag(ρ'(W x)) W, assembled symmetrically.
TiedJacobian tied_jacobian(const TiedAutoencoder& ae, std::span<const double> x);

// Encoder widths shrink geometrically from d to m over layers/2 steps and
// the decoder mirrors them. Returns layers+1 widths starting and ending at d.
std::vector<std::size_t> default_fc_widths(std::size_t d, std::size_t m, std::size_t layers = 10);

// He-style uniform init (bound sqrt(6/fan_in)), zero biases, `hidden` on
// every layer except the last, which is linear.
AutoencoderModel make_fc_autoencoder(std::span<const std::size_t> widths, const Activation& hidden, Rng& rng);

TiedAutoencoder make_tied_autoencoder(std::size_t d, std::size_t m, const Activation& act, Rng& rng);

}  // namespace memprobe
