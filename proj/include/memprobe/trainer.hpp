#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "memprobe/autoencoder.hpp"

namespace memprobe {

using Dataset = std::vector<ImageVector>;

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 0;  // 0 = full batch
  std::uint64_t seed = 42;
  // Strictly decreasing MSE levels; one checkpoint is taken at each.
  std::vector<double> loss_checkpoints{1e-4, 1e-5, 1e-6, 1e-7, 1e-8};
  std::size_t max_epochs = 100000;
  // Learning rate is multiplied by decay_factor after decay_patience
  // epochs without a new best loss.
  std::size_t decay_patience = 200;
  double decay_factor = 0.5;
  double min_learning_rate = 1e-5;

  void validate() const;
};

struct Checkpoint {
  double threshold = 0.0;
  double loss = 0.0;  // full-training-set MSE of `model`
  std::size_t epoch = 0;
  Model model;
};

struct TrainLogRow {
  std::size_t epoch = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
};

enum class TrainStatus { ReachedTarget, MaxEpochs };

struct TrainResult {
  TrainStatus status = TrainStatus::MaxEpochs;
  std::vector<Checkpoint> checkpoints;
  Model final_model;
  double final_loss = 0.0;
  std::size_t epochs = 0;
  std::vector<TrainLogRow> log;
};

// (1/(n·d)) Σ_i ‖f(x_i) − x_i‖², evaluated with the same batched kernels the
// trainer uses, so a checkpoint's stored loss is reproduced exactly.
double mse_loss(const Model& model, const Dataset& data);

// Trainable parameters in a fixed order: per layer weight, bias (if any),
// PReLU slope (if any). A tied model has the single weight block.
std::vector<std::span<double>> parameter_blocks(Model& model);
std::size_t parameter_count(const Model& model);

// Gradient of mse_loss over `batch`, laid out like parameter_blocks().
std::vector<Vector> backprop_gradients(const Model& model, const Dataset& batch);

using TrainObserver = std::function<void(const TrainLogRow&)>;

// Adam on the MSE loss. Deterministic given the config seed. Throws
// NumericalError when the loss becomes NaN/Inf.
TrainResult train(Model model, const Dataset& data, const TrainConfig& config, const TrainObserver& observer = {});

// W ← W · min(1, target / σ₁(W)).
TiedAutoencoder project_spectral_norm(const TiedAutoencoder& ae, double target);

}  // namespace memprobe
