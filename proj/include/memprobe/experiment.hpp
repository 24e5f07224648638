#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "memprobe/autoencoder.hpp"
#include "memprobe/degradation.hpp"
#include "memprobe/io.hpp"
#include "memprobe/metrics.hpp"
#include "memprobe/proxcheck.hpp"
#include "memprobe/recovery.hpp"
#include "memprobe/trainer.hpp"

namespace memprobe {

enum class RecoveryMode { UnknownH, KnownH, Baseline };

RecoveryMode recovery_mode_from_string(const std::string& name);
std::string to_string(RecoveryMode mode);

enum class Stage { Train, Degrade, Recover, Evaluate, Proxcheck, E2E };

Stage stage_from_string(const std::string& name);
std::string to_string(Stage stage);

enum class Split { Train, Holdout };

std::string to_string(Split split);

struct ExperimentConfig {
  // dataset.*; an empty path selects the built-in synthetic images.
  std::string dataset_path;
  std::string holdout_path;
  ImageGeometry geometry{16, 16, 1};
  std::size_t train_count = 20;
  std::size_t holdout_count = 20;

  // model.*
  std::string arch = "fc";  // fc | tied
  std::size_t layers = 10;
  std::size_t latent = 0;  // 0: twice the training-set size
  std::vector<std::size_t> widths;  // explicit override of the fc shape
  Activation activation = Activation::leaky_relu(0.01);

  TrainConfig train;

  // degrade.*
  MaskPattern mask_pattern = MaskPattern::UniformRandom;
  MaskParams mask_params;
  std::string mask_file;
  double sigma_eps = 0.0;
  bool noise_on_kept_only = false;

  // recover.*
  RecoveryConfig recovery;
  std::optional<double> gamma;  // unset: chosen from the architecture
  std::vector<RecoveryMode> modes{RecoveryMode::UnknownH, RecoveryMode::KnownH, RecoveryMode::Baseline};
  std::size_t baseline_max_iters = 1000;
  double baseline_tol = 1e-12;
  std::string model_path;   // default <out>/model.mpmd
  std::optional<double> checkpoint;  // loss threshold selecting a saved checkpoint
  bool write_traces = false;

  // eval.*
  EvalThresholds thresholds;
  std::vector<double> sweep;  // checkpoint thresholds swept by e2e; empty = all

  // proxcheck.*
  std::size_t proxcheck_probes = 16;
  std::size_t proxcheck_sweep = 100;
  double proxcheck_tol = 1e-6;

  std::filesystem::path out = "memprobe_out";
  std::uint64_t seed = 42;

  // Unknown keys and malformed values raise InvalidArgument / ParseError.
  static ExperimentConfig from_map(const ConfigMap& map);
  void validate() const;
  nlohmann::ordered_json to_json() const;
};

struct PreparedData {
  ImageGeometry geometry;
  std::vector<std::string> train_ids;
  std::vector<std::string> holdout_ids;
  Dataset train;
  Dataset holdout;
};

// MEMPROBE_THREADS, or the hardware concurrency when unset; 0 means
// sequential.
std::size_t worker_count();

// Runs body(i) for i in [0, n) across worker_count() threads. The first
// exception (lowest index) is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

PreparedData prepare_data(const ExperimentConfig& config);
Model build_model(const ExperimentConfig& config, std::size_t d, std::size_t n);
double effective_gamma(const ExperimentConfig& config, const Model& model);
ErasureMask build_mask(const ExperimentConfig& config, const ImageGeometry& geometry);
Dataset degrade_split(const ExperimentConfig& config, const ErasureMask& mask, const Dataset& images, Split split);

std::vector<RecoveryResult> recover_split(const ExperimentConfig& config, const Model& model, RecoveryMode mode,
                                          const Dataset& observations, const ErasureMask& mask, const Dataset* truths,
                                          Split split);

EvalSummary evaluate_split(const std::vector<RecoveryResult>& results, const Dataset& truths,
                           const EvalThresholds& thresholds);

// Reports for deep models carry the out-of-scope verdict only.
ProxReport proxcheck_model(const Model& model, const std::vector<Vector>& extra_probes, std::size_t random_probes,
                           double tol, std::uint64_t seed);

struct SweepResult {
  std::size_t total = 0;
  std::size_t certified = 0;
  std::vector<ProxReport> reports;
};

// Random tied Softplus autoencoders (d ≤ 32, m ≤ 64), spectrally projected
// to σ₁ ≤ 1, each checked at fresh probe points.
SweepResult theorem_sweep(std::size_t count, std::uint64_t seed, double tol);

nlohmann::ordered_json to_json(const ProxReport& report);
nlohmann::ordered_json to_json(const EvalSummary& summary);

// JSON-safe number: infinities become the strings "inf" / "-inf".
nlohmann::ordered_json json_number(double v);

std::string checkpoint_name(double threshold);

// File-based stage driver; artifacts live under config.out. Progress lines
// go to `log`.
void run_stage(Stage stage, const ExperimentConfig& config, std::ostream& log);

}  // namespace memprobe
