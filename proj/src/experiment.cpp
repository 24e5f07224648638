#include "memprobe/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "memprobe/error.hpp"
#include "memprobe/synthetic.hpp"

namespace memprobe {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

RecoveryMode recovery_mode_from_string(const std::string& name) {
  if (name == "unknown-h") return RecoveryMode::UnknownH;
  if (name == "known-h") return RecoveryMode::KnownH;
  if (name == "baseline") return RecoveryMode::Baseline;
  throw InvalidArgument("unknown recovery mode '" + name + "' (expected unknown-h, known-h or baseline)");
}

std::string to_string(RecoveryMode mode) {
  switch (mode) {
    case RecoveryMode::UnknownH: return "unknown-h";
    case RecoveryMode::KnownH: return "known-h";
    case RecoveryMode::Baseline: return "baseline";
  }
  return "unknown";
}

Stage stage_from_string(const std::string& name) {
  if (name == "train") return Stage::Train;
  if (name == "degrade") return Stage::Degrade;
  if (name == "recover") return Stage::Recover;
  if (name == "evaluate") return Stage::Evaluate;
  if (name == "proxcheck") return Stage::Proxcheck;
  if (name == "e2e") return Stage::E2E;
  throw InvalidArgument("unknown stage '" + name + "'");
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::Train: return "train";
    case Stage::Degrade: return "degrade";
    case Stage::Recover: return "recover";
    case Stage::Evaluate: return "evaluate";
    case Stage::Proxcheck: return "proxcheck";
    case Stage::E2E: return "e2e";
  }
  return "unknown";
}

std::string to_string(Split split) { return split == Split::Train ? "train" : "holdout"; }

// ---------------------------------------------------------------------------
// Config parsing

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_real(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw InvalidArgument("config key '" + key + "': expected a number, got '" + raw + "'");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw InvalidArgument("config key '" + key + "': expected a nonnegative integer, got '" + raw + "'");
  }
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& raw) {
  return static_cast<std::size_t>(parse_u64(key, raw));
}

bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InvalidArgument("config key '" + key + "': expected true or false, got '" + raw + "'");
}

std::vector<std::string> split_list(const std::string& raw) {
  std::vector<std::string> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_real_list(const std::string& key, const std::string& raw) {
  std::vector<double> out;
  for (const auto& s : split_list(raw)) out.push_back(parse_real(key, s));
  return out;
}

std::string join_reals(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_number(v[i]);
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_map(const ConfigMap& map) {
  ExperimentConfig c;
  std::optional<std::string> activation_name;
  std::optional<double> activation_param;
  std::optional<double> loss_target;
  bool train_seed_set = false;

  for (const auto& [key, value] : map) {
    const std::string v = trim(value);
    if (key == "seed") c.seed = parse_u64(key, v);
    else if (key == "out") c.out = v;
    else if (key == "dataset.path") c.dataset_path = v;
    else if (key == "dataset.holdout_path") c.holdout_path = v;
    else if (key == "dataset.height") c.geometry.height = parse_size(key, v);
    else if (key == "dataset.width") c.geometry.width = parse_size(key, v);
    else if (key == "dataset.channels") c.geometry.channels = parse_size(key, v);
    else if (key == "dataset.count") c.train_count = parse_size(key, v);
    else if (key == "dataset.holdout_count") c.holdout_count = parse_size(key, v);
    else if (key == "model.arch") c.arch = v;
    else if (key == "model.layers") c.layers = parse_size(key, v);
    else if (key == "model.latent") c.latent = parse_size(key, v);
    else if (key == "model.widths") {
      c.widths.clear();
      for (const auto& s : split_list(v)) c.widths.push_back(parse_size(key, s));
    } else if (key == "model.activation") activation_name = v;
    else if (key == "model.activation_param") activation_param = parse_real(key, v);
    else if (key == "train.lr") c.train.learning_rate = parse_real(key, v);
    else if (key == "train.beta1") c.train.beta1 = parse_real(key, v);
    else if (key == "train.beta2") c.train.beta2 = parse_real(key, v);
    else if (key == "train.epsilon") c.train.epsilon = parse_real(key, v);
    else if (key == "train.batch_size") c.train.batch_size = v == "full" ? 0 : parse_size(key, v);
    else if (key == "train.seed") {
      c.train.seed = parse_u64(key, v);
      train_seed_set = true;
    } else if (key == "train.checkpoints") c.train.loss_checkpoints = parse_real_list(key, v);
    else if (key == "train.loss_target") loss_target = parse_real(key, v);
    else if (key == "train.max_epochs") c.train.max_epochs = parse_size(key, v);
    else if (key == "train.decay_patience") c.train.decay_patience = parse_size(key, v);
    else if (key == "train.decay_factor") c.train.decay_factor = parse_real(key, v);
    else if (key == "train.min_lr") c.train.min_learning_rate = parse_real(key, v);
    else if (key == "degrade.pattern") c.mask_pattern = mask_pattern_from_string(v);
    else if (key == "degrade.p_erase") c.mask_params.p_erase = parse_real(key, v);
    else if (key == "degrade.block_fraction") c.mask_params.block_fraction = parse_real(key, v);
    else if (key == "degrade.period") c.mask_params.period = parse_size(key, v);
    else if (key == "degrade.duty") c.mask_params.duty = parse_real(key, v);
    else if (key == "degrade.side") c.mask_params.side = v;
    else if (key == "degrade.mask_file") c.mask_file = v;
    else if (key == "degrade.sigma_eps") c.sigma_eps = parse_real(key, v);
    else if (key == "degrade.noise_on_kept_only") c.noise_on_kept_only = parse_bool(key, v);
    else if (key == "recover.mode") {
      c.modes.clear();
      for (const auto& s : split_list(v)) {
        if (s == "all") {
          c.modes = {RecoveryMode::UnknownH, RecoveryMode::KnownH, RecoveryMode::Baseline};
          break;
        }
        c.modes.push_back(recovery_mode_from_string(s));
      }
    } else if (key == "recover.gamma") {
      if (v == "auto") c.gamma.reset();
      else c.gamma = parse_real(key, v);
    } else if (key == "recover.admm_iters") c.recovery.admm_iters = parse_size(key, v);
    else if (key == "recover.outer_tol") c.recovery.outer_tol = parse_real(key, v);
    else if (key == "recover.patience") c.recovery.patience = parse_size(key, v);
    else if (key == "recover.max_outer") c.recovery.max_outer = parse_size(key, v);
    else if (key == "recover.mask_init") c.recovery.mask_init = mask_init_from_string(v);
    else if (key == "recover.baseline_max_iters") c.baseline_max_iters = parse_size(key, v);
    else if (key == "recover.baseline_tol") c.baseline_tol = parse_real(key, v);
    else if (key == "recover.model") c.model_path = v;
    else if (key == "recover.checkpoint") {
      if (v.empty() || v == "final") c.checkpoint.reset();
      else c.checkpoint = parse_real(key, v);
    } else if (key == "recover.traces") c.write_traces = parse_bool(key, v);
    else if (key == "eval.accurate_mse") c.thresholds.accurate_mse = parse_real(key, v);
    else if (key == "eval.approximate_mse") c.thresholds.approximate_mse = parse_real(key, v);
    else if (key == "eval.sweep") c.sweep = parse_real_list(key, v);
    else if (key == "proxcheck.probes") c.proxcheck_probes = parse_size(key, v);
    else if (key == "proxcheck.sweep") c.proxcheck_sweep = parse_size(key, v);
    else if (key == "proxcheck.tol") c.proxcheck_tol = parse_real(key, v);
    else throw InvalidArgument("unknown config key '" + key + "'");
  }

  if (activation_name) {
    const ActivationKind kind = activation_kind_from_string(*activation_name);
    switch (kind) {
      case ActivationKind::Identity: c.activation = Activation::identity(); break;
      case ActivationKind::LeakyReLU: c.activation = Activation::leaky_relu(activation_param.value_or(0.01)); break;
      case ActivationKind::PReLU: c.activation = Activation::prelu(activation_param.value_or(0.25)); break;
      case ActivationKind::Softplus: c.activation = Activation::softplus(activation_param.value_or(1.0)); break;
    }
  } else if (activation_param) {
    c.activation = Activation::leaky_relu(*activation_param);
  }

  if (loss_target) {
    std::vector<double> kept;
    for (double t : c.train.loss_checkpoints)
      if (t > *loss_target) kept.push_back(t);
    kept.push_back(*loss_target);
    c.train.loss_checkpoints = std::move(kept);
  }
  if (!train_seed_set) c.train.seed = c.seed;
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (geometry.height == 0 || geometry.width == 0 || geometry.channels == 0) {
    throw InvalidArgument("dataset geometry must be positive");
  }
  if (train_count == 0) throw InvalidArgument("dataset.count must be >= 1");
  if (arch != "fc" && arch != "tied") throw InvalidArgument("model.arch must be fc or tied");
  if (arch == "fc" && widths.empty() && (layers < 2 || layers % 2 != 0)) {
    throw InvalidArgument("model.layers must be an even number >= 2");
  }
  if (!widths.empty()) {
    if (widths.size() < 2) throw InvalidArgument("model.widths needs at least two entries");
    if (widths.front() != geometry.size() || widths.back() != geometry.size()) {
      throw InvalidArgument("model.widths must start and end at height*width*channels");
    }
    for (auto w : widths)
      if (w == 0) throw InvalidArgument("model.widths entries must be positive");
  }
  train.validate();
  if (!(sigma_eps >= 0.0) || !std::isfinite(sigma_eps)) throw InvalidArgument("degrade.sigma_eps must be >= 0");
  if (!(mask_params.p_erase >= 0.0 && mask_params.p_erase <= 1.0)) {
    throw InvalidArgument("degrade.p_erase must lie in [0,1]");
  }
  if (gamma && (!(*gamma > 0.0) || !std::isfinite(*gamma))) throw InvalidArgument("recover.gamma must be positive");
  RecoveryConfig rc = recovery;
  if (rc.mask_init == MaskInit::FromMask) rc.initial_mask = ErasureMask::ones(1);
  rc.validate();
  if (modes.empty()) throw InvalidArgument("recover.mode selects no modes");
  if (baseline_max_iters == 0) throw InvalidArgument("recover.baseline_max_iters must be >= 1");
  if (!(baseline_tol >= 0.0)) throw InvalidArgument("recover.baseline_tol must be >= 0");
  thresholds.validate();
  if (proxcheck_probes == 0) throw InvalidArgument("proxcheck.probes must be >= 1");
  if (!(proxcheck_tol > 0.0)) throw InvalidArgument("proxcheck.tol must be positive");
}

ojson ExperimentConfig::to_json() const {
  ojson j;
  j["seed"] = seed;
  j["dataset"] = {{"path", dataset_path},
                  {"holdout_path", holdout_path},
                  {"height", geometry.height},
                  {"width", geometry.width},
                  {"channels", geometry.channels},
                  {"count", train_count},
                  {"holdout_count", holdout_count}};
  ojson model{{"arch", arch}, {"layers", layers}, {"latent", latent}, {"widths", widths}};
  model["activation"] = to_string(activation.kind);
  model["activation_param"] = activation.param;
  j["model"] = model;
  j["train"] = {{"lr", train.learning_rate},
                {"beta1", train.beta1},
                {"beta2", train.beta2},
                {"epsilon", train.epsilon},
                {"batch_size", train.batch_size},
                {"seed", train.seed},
                {"checkpoints", join_reals(train.loss_checkpoints)},
                {"max_epochs", train.max_epochs},
                {"decay_patience", train.decay_patience},
                {"decay_factor", train.decay_factor},
                {"min_lr", train.min_learning_rate}};
  j["degrade"] = {{"pattern", to_string(mask_pattern)},
                  {"p_erase", mask_params.p_erase},
                  {"block_fraction", mask_params.block_fraction},
                  {"period", mask_params.period},
                  {"duty", mask_params.duty},
                  {"side", mask_params.side},
                  {"mask_file", mask_file},
                  {"sigma_eps", sigma_eps},
                  {"noise_on_kept_only", noise_on_kept_only}};
  ojson mode_list = ojson::array();
  for (auto m : modes) mode_list.push_back(to_string(m));
  ojson rec{{"mode", mode_list}};
  rec["gamma"] = gamma ? ojson(*gamma) : ojson("auto");
  rec["admm_iters"] = recovery.admm_iters;
  rec["outer_tol"] = recovery.outer_tol;
  rec["patience"] = recovery.patience;
  rec["max_outer"] = recovery.max_outer;
  rec["mask_init"] = to_string(recovery.mask_init);
  rec["baseline_max_iters"] = baseline_max_iters;
  rec["baseline_tol"] = baseline_tol;
  rec["checkpoint"] = checkpoint ? ojson(*checkpoint) : ojson("final");
  j["recover"] = rec;
  j["eval"] = {{"accurate_mse", thresholds.accurate_mse},
               {"approximate_mse", thresholds.approximate_mse},
               {"sweep", join_reals(sweep)}};
  return j;
}

// ---------------------------------------------------------------------------
// Workers

std::size_t worker_count() {
  if (const char* env = std::getenv("MEMPROBE_THREADS")) {
    return parse_size("MEMPROBE_THREADS", env);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Pipeline pieces

namespace {

std::string synth_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "synth_%04zu", index);
  return buf;
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& config) {
  PreparedData out;
  if (config.dataset_path.empty()) {
    const auto& g = config.geometry;
    out.geometry = g;
    out.train = synthetic_images(0, config.train_count, g.height, g.width, g.channels, config.seed);
    out.holdout =
        synthetic_images(config.train_count, config.holdout_count, g.height, g.width, g.channels, config.seed);
    for (std::size_t i = 0; i < config.train_count; ++i) out.train_ids.push_back(synth_id(i));
    for (std::size_t i = 0; i < config.holdout_count; ++i) out.holdout_ids.push_back(synth_id(config.train_count + i));
    return out;
  }
  auto records = load_dataset(config.dataset_path, config.geometry, config.train_count, config.seed);
  out.geometry = records.front().geometry;
  for (auto& r : records) {
    out.train_ids.push_back(r.sample_id);
    out.train.push_back(std::move(r.pixels));
  }
  if (!config.holdout_path.empty()) {
    auto held = load_dataset(config.holdout_path, out.geometry, config.holdout_count, config.seed);
    for (auto& r : held) {
      out.holdout_ids.push_back(r.sample_id);
      out.holdout.push_back(std::move(r.pixels));
    }
  }
  return out;
}

Model build_model(const ExperimentConfig& config, std::size_t d, std::size_t n) {
  const std::size_t m = config.latent ? config.latent : 2 * n;
  Rng rng(config.train.seed);
  if (config.arch == "tied") return make_tied_autoencoder(d, m, config.activation, rng);
  const std::vector<std::size_t> widths = config.widths.empty() ? default_fc_widths(d, m, config.layers) : config.widths;
  if (widths.front() != d || widths.back() != d) throw DimensionError("model widths do not match the image size");
  return make_fc_autoencoder(widths, config.activation, rng);
}

double effective_gamma(const ExperimentConfig& config, const Model& model) {
  return config.gamma ? *config.gamma : default_gamma(model);
}

ErasureMask build_mask(const ExperimentConfig& config, const ImageGeometry& geometry) {
  if (!config.mask_file.empty()) {
    ErasureMask mask = read_mask(config.mask_file, geometry.channels);
    if (mask.size() != geometry.size()) throw DimensionError("mask file length differs from the image size");
    return mask;
  }
  Rng rng(derive_seed(config.seed, 1));
  return generate_mask(config.mask_pattern, config.mask_params, geometry, rng);
}

Dataset degrade_split(const ExperimentConfig& config, const ErasureMask& mask, const Dataset& images, Split split) {
  const std::uint64_t base = derive_seed(config.seed, 2 + static_cast<std::uint64_t>(split));
  Dataset out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    DegradationSpec spec{mask, config.sigma_eps, derive_seed(base, i), config.noise_on_kept_only};
    out.push_back(degrade(images[i], spec));
  }
  return out;
}

std::vector<RecoveryResult> recover_split(const ExperimentConfig& config, const Model& model, RecoveryMode mode,
                                          const Dataset& observations, const ErasureMask& mask, const Dataset* truths,
                                          Split split) {
  if (truths && truths->size() != observations.size()) throw DimensionError("truth count differs from observations");
  RecoveryConfig rc = config.recovery;
  rc.gamma = effective_gamma(config, model);
  if (rc.mask_init == MaskInit::FromMask) rc.initial_mask = mask;
  const std::uint64_t base = derive_seed(config.seed, 4 + static_cast<std::uint64_t>(split));
  const bool noiseless = config.sigma_eps == 0.0;
  const AutoencoderFn f = as_function(model);

  std::vector<RecoveryResult> results(observations.size());
  parallel_for(observations.size(), [&](std::size_t i) {
    std::optional<std::span<const double>> truth;
    if (truths) truth = std::span<const double>((*truths)[i]);
    const auto& y = observations[i];
    switch (mode) {
      case RecoveryMode::UnknownH: {
        RecoveryConfig local = rc;
        local.seed = derive_seed(base, i);
        results[i] = recover_unknown_h(f, y, local, truth);
        break;
      }
      case RecoveryMode::KnownH: results[i] = recover_known_h(f, y, mask, rc, noiseless, truth); break;
      case RecoveryMode::Baseline:
        results[i] = baseline_iterate(f, y, config.baseline_max_iters, config.baseline_tol, truth);
        break;
    }
  });
  return results;
}

EvalSummary evaluate_split(const std::vector<RecoveryResult>& results, const Dataset& truths,
                           const EvalThresholds& thresholds) {
  if (results.size() != truths.size()) throw DimensionError("result count differs from truth count");
  std::vector<double> mses;
  mses.reserve(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) mses.push_back(mse(results[i].estimate, truths[i]));
  return summarize(mses, thresholds);
}

ProxReport proxcheck_model(const Model& model, const std::vector<Vector>& extra_probes, std::size_t random_probes,
                           double tol, std::uint64_t seed) {
  const auto* tied = std::get_if<TiedAutoencoder>(&model);
  if (!tied) {
    ProxReport rep;
    rep.verdict = ProxVerdict::OutOfTheoremScope;
    return rep;
  }
  Rng rng(seed);
  const auto probes = default_probe_points(tied->weight.cols(), random_probes, rng, extra_probes);
  ProxCheckOptions options;
  options.tol = tol;
  return check_moreau(*tied, probes, options);
}

SweepResult theorem_sweep(std::size_t count, std::uint64_t seed, double tol) {
  SweepResult out;
  out.total = count;
  out.reports.resize(count);
  parallel_for(count, [&](std::size_t k) {
    Rng rng(derive_seed(seed, k));
    const std::size_t d = 2 + rng.below(31);
    const std::size_t m = 1 + rng.below(64);
    const Activation act = Activation::softplus(rng.uniform(0.5, 4.0));
    TiedAutoencoder ae = make_tied_autoencoder(d, m, act, rng);
    const double scale = rng.uniform(0.5, 3.0);
    for (std::size_t r = 0; r < ae.weight.rows(); ++r)
      for (auto& v : ae.weight.row(r)) v *= scale;
    ae = project_spectral_norm(ae, 1.0);
    const auto probes = default_probe_points(d, 16, rng);
    ProxCheckOptions options;
    options.tol = tol;
    out.reports[k] = check_moreau(ae, probes, options);
  });
  for (const auto& r : out.reports)
    if (r.verdict == ProxVerdict::Certified) ++out.certified;
  return out;
}

ojson json_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return v;
}

ojson to_json(const ProxReport& r) {
  ojson j;
  j["verdict"] = to_string(r.verdict);
  if (r.verdict == ProxVerdict::OutOfTheoremScope) return j;
  j["premise_activation_ok"] = r.premise_activation_ok;
  j["activation_differentiable"] = r.activation_differentiable;
  j["derivative_min"] = json_number(r.derivative_min);
  j["derivative_max"] = json_number(r.derivative_max);
  j["premise_sigma_ok"] = r.premise_sigma_ok;
  j["sigma_max"] = json_number(r.sigma_max);
  j["jacobian_symmetry_defect"] = json_number(r.jacobian_symmetry_defect);
  j["symmetry_bound_ratio"] = json_number(r.symmetry_bound_ratio);
  j["eigen_min"] = json_number(r.eigen_min);
  j["eigen_max"] = json_number(r.eigen_max);
  j["analytic_vs_numeric_jacobian_maxerr"] = json_number(r.analytic_vs_numeric_jacobian_maxerr);
  j["probes"] = r.probes;
  return j;
}

ojson to_json(const EvalSummary& s) {
  return {{"accurate_rate", s.accurate_rate},
          {"approximate_rate", s.approximate_rate},
          {"average_psnr", json_number(s.average_psnr)},
          {"accurate_count", s.accurate_count},
          {"approximate_count", s.approximate_count},
          {"samples", s.records.size()}};
}

std::string checkpoint_name(double threshold) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "loss_%.0e", threshold);
  return buf;
}

// ---------------------------------------------------------------------------
// File-based stages

namespace {

struct Layout {
  fs::path root;
  fs::path data(Split s) const { return root / "data" / (to_string(s) + ".mprb"); }
  fs::path ids(Split s) const { return root / "data" / (to_string(s) + "_ids.txt"); }
  fs::path model() const { return root / "model.mpmd"; }
  fs::path checkpoint(double t) const { return root / "checkpoints" / (checkpoint_name(t) + ".mpmd"); }
  fs::path train_log() const { return root / "train_log.csv"; }
  fs::path train_json() const { return root / "train.json"; }
  fs::path mask() const { return root / "mask.pbm"; }
  fs::path degraded(Split s) const { return root / "degraded" / (to_string(s) + ".mprb"); }
  fs::path recovered(RecoveryMode m, Split s) const { return root / "recover" / to_string(m) / (to_string(s) + ".mprb"); }
  fs::path records(RecoveryMode m, Split s) const {
    return root / "recover" / to_string(m) / (to_string(s) + "_records.json");
  }
  fs::path trace(RecoveryMode m, Split s, const std::string& id) const {
    return root / "recover" / to_string(m) / "traces" / (to_string(s) + "_" + id + ".csv");
  }
  fs::path eval_csv(RecoveryMode m, Split s) const {
    return root / "eval" / (to_string(m) + "_" + to_string(s) + ".csv");
  }
  fs::path sweep() const { return root / "sweep.json"; }
  fs::path summary() const { return root / "summary.json"; }
  fs::path proxcheck() const { return root / "proxcheck.json"; }
};

constexpr Split kSplits[] = {Split::Train, Split::Holdout};

void write_json(const fs::path& path, const ojson& j) { write_file(path, j.dump(2) + "\n"); }

void write_ids(const fs::path& path, const std::vector<std::string>& ids) {
  std::string text;
  for (const auto& id : ids) text += id + "\n";
  write_file(path, text);
}

std::vector<std::string> read_ids(const fs::path& path) {
  std::vector<std::string> ids;
  std::stringstream ss(read_file(path));
  std::string line;
  while (std::getline(ss, line))
    if (!line.empty()) ids.push_back(line);
  return ids;
}

void save_data(const Layout& L, const PreparedData& data) {
  write_tensor(L.data(Split::Train), {data.geometry, data.train});
  write_ids(L.ids(Split::Train), data.train_ids);
  if (!data.holdout.empty()) {
    write_tensor(L.data(Split::Holdout), {data.geometry, data.holdout});
    write_ids(L.ids(Split::Holdout), data.holdout_ids);
  }
}

PreparedData load_or_prepare(const ExperimentConfig& config, const Layout& L, std::ostream& log) {
  if (!fs::exists(L.data(Split::Train))) {
    PreparedData data = prepare_data(config);
    save_data(L, data);
    log << "prepared " << data.train.size() << " training and " << data.holdout.size() << " holdout images\n";
    return data;
  }
  PreparedData data;
  TensorFile t = read_tensor(L.data(Split::Train));
  data.geometry = t.geometry;
  data.train = std::move(t.images);
  data.train_ids = read_ids(L.ids(Split::Train));
  if (fs::exists(L.data(Split::Holdout))) {
    TensorFile h = read_tensor(L.data(Split::Holdout));
    data.holdout = std::move(h.images);
    data.holdout_ids = read_ids(L.ids(Split::Holdout));
  }
  if (data.train_ids.size() != data.train.size() || data.holdout_ids.size() != data.holdout.size()) {
    throw ParseError("sample id list length differs from the stored images");
  }
  return data;
}

const Dataset& split_images(const PreparedData& d, Split s) { return s == Split::Train ? d.train : d.holdout; }
const std::vector<std::string>& split_ids(const PreparedData& d, Split s) {
  return s == Split::Train ? d.train_ids : d.holdout_ids;
}

fs::path model_file(const ExperimentConfig& config, const Layout& L) {
  if (!config.model_path.empty()) return config.model_path;
  if (config.checkpoint) return L.checkpoint(*config.checkpoint);
  return L.model();
}

void stage_train(const ExperimentConfig& config, const Layout& L, std::ostream& log) {
  PreparedData data = prepare_data(config);
  save_data(L, data);
  Model model = build_model(config, data.geometry.size(), data.train.size());
  log << "training " << (config.arch == "tied" ? "tied" : "fc") << " autoencoder with " << parameter_count(model)
      << " parameters on " << data.train.size() << " images\n";
  TrainResult res = train(std::move(model), data.train, config.train, [&](const TrainLogRow& row) {
    if (row.epoch % 1000 == 0) log << "  epoch " << row.epoch << " loss " << format_number(row.loss) << "\n";
  });

  save_model(L.model(), res.final_model);
  std::string csv = "epoch,loss,lr\n";
  for (const auto& row : res.log) {
    csv += std::to_string(row.epoch) + "," + format_number(row.loss) + "," + format_number(row.learning_rate) + "\n";
  }
  write_file(L.train_log(), csv);

  ojson ckpts = ojson::array();
  for (const auto& c : res.checkpoints) {
    save_model(L.checkpoint(c.threshold), c.model);
    ckpts.push_back({{"threshold", c.threshold},
                     {"loss", c.loss},
                     {"epoch", c.epoch},
                     {"file", "checkpoints/" + checkpoint_name(c.threshold) + ".mpmd"}});
    log << "  checkpoint " << format_number(c.threshold) << " at epoch " << c.epoch << "\n";
  }
  const bool reached = res.status == TrainStatus::ReachedTarget;
  write_json(L.train_json(), {{"status", reached ? "reached_target" : "max_epochs"},
                              {"epochs", res.epochs},
                              {"final_loss", res.final_loss},
                              {"parameters", parameter_count(res.final_model)},
                              {"checkpoints", ckpts}});
  log << (reached ? "reached" : "did not reach") << " target loss; final loss " << format_number(res.final_loss)
      << " after " << res.epochs << " epochs\n";
}

void stage_degrade(const ExperimentConfig& config, const Layout& L, std::ostream& log) {
  PreparedData data = load_or_prepare(config, L, log);
  const ErasureMask mask = build_mask(config, data.geometry);
  write_mask(L.mask(), mask, data.geometry);
  for (Split s : kSplits) {
    const Dataset& images = split_images(data, s);
    if (images.empty()) continue;
    write_tensor(L.degraded(s), {data.geometry, degrade_split(config, mask, images, s)});
  }
  log << "mask keeps " << mask.kept_count() << " of " << mask.size() << " coordinates; sigma_eps "
      << format_number(config.sigma_eps) << "\n";
}

void write_recovery(const ExperimentConfig& config, const Layout& L, RecoveryMode mode, Split s,
                    const std::vector<std::string>& ids, const std::vector<RecoveryResult>& results,
                    const ImageGeometry& geometry, const ErasureMask* true_mask, double gamma) {
  Dataset estimates;
  ojson records = ojson::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    estimates.push_back(r.estimate);
    ojson rec{{"sample_id", ids[i]}, {"converged", r.converged}, {"outer_iters", r.outer_iters}};
    if (!r.truth_trace.empty()) {
      rec["final_mse"] = json_number(r.truth_trace.back());
      rec["final_psnr"] = json_number(psnr(r.truth_trace.back()));
    }
    if (true_mask) rec["mask_hamming_error"] = r.mask_estimate.hamming(*true_mask);
    records.push_back(rec);

    if (config.write_traces) {
      std::string csv = "iter,change_mse,truth_mse\n";
      for (std::size_t t = 0; t < r.change_trace.size(); ++t) {
        csv += std::to_string(t + 1) + "," + format_number(r.change_trace[t]) + "," +
               (t < r.truth_trace.size() ? format_number(r.truth_trace[t]) : std::string()) + "\n";
      }
      write_file(L.trace(mode, s, ids[i]), csv);
    }
  }
  write_tensor(L.recovered(mode, s), {geometry, estimates});
  write_json(L.records(mode, s),
             {{"mode", to_string(mode)}, {"split", to_string(s)}, {"gamma", gamma}, {"records", records}});
}

void stage_recover(const ExperimentConfig& config, const Layout& L, std::ostream& log) {
  const PreparedData data = load_or_prepare(config, L, log);
  if (!fs::exists(L.degraded(Split::Train))) stage_degrade(config, L, log);
  const ErasureMask mask = read_mask(L.mask(), data.geometry.channels);
  const Model model = load_model(model_file(config, L));
  const double gamma = effective_gamma(config, model);

  for (RecoveryMode mode : config.modes) {
    for (Split s : kSplits) {
      const Dataset& truths = split_images(data, s);
      if (truths.empty() || !fs::exists(L.degraded(s))) continue;
      const Dataset ys = read_tensor(L.degraded(s)).images;
      const auto results = recover_split(config, model, mode, ys, mask, &truths, s);
      write_recovery(config, L, mode, s, split_ids(data, s), results, data.geometry, &mask, gamma);
      std::size_t converged = 0;
      for (const auto& r : results) converged += r.converged ? 1 : 0;
      log << "recovered " << to_string(s) << " split with " << to_string(mode) << " (gamma " << format_number(gamma)
          << "): " << converged << "/" << results.size() << " converged\n";
    }
  }
}

void stage_evaluate(const ExperimentConfig& config, const Layout& L, std::ostream& log) {
  const PreparedData data = load_or_prepare(config, L, log);
  ojson results = ojson::object();
  for (RecoveryMode mode : {RecoveryMode::UnknownH, RecoveryMode::KnownH, RecoveryMode::Baseline}) {
    ojson per_split = ojson::object();
    for (Split s : kSplits) {
      if (!fs::exists(L.recovered(mode, s))) continue;
      const Dataset& truths = split_images(data, s);
      const Dataset est = read_tensor(L.recovered(mode, s)).images;
      if (est.size() != truths.size()) throw DimensionError("recovered image count differs from the dataset");
      std::vector<double> mses;
      for (std::size_t i = 0; i < est.size(); ++i) mses.push_back(mse(est[i], truths[i]));
      const EvalSummary summary = summarize(mses, config.thresholds);

      std::string csv = "sample_id,mse,psnr_db,accurate,approximate\n";
      const auto& ids = split_ids(data, s);
      for (const auto& rec : summary.records) {
        csv += ids[rec.sample_id] + "," + format_number(rec.mse) + "," + format_number(rec.psnr_db) + "," +
               (rec.accurate ? "1" : "0") + "," + (rec.approximate ? "1" : "0") + "\n";
      }
      write_file(L.eval_csv(mode, s), csv);
      per_split[to_string(s)] = to_json(summary);
      log << to_string(mode) << " " << to_string(s) << ": accurate " << format_number(summary.accurate_rate)
          << "%, approximate " << format_number(summary.approximate_rate) << "%, average PSNR "
          << format_number(summary.average_psnr) << " dB\n";
    }
    if (!per_split.empty()) results[to_string(mode)] = per_split;
  }
  if (results.empty()) throw IoError("evaluate: no recovered images under " + L.root.string());

  ojson summary;
  summary["config"] = config.to_json();
  if (fs::exists(L.train_json())) summary["train"] = ojson::parse(read_file(L.train_json()));
  summary["results"] = results;
  if (fs::exists(L.sweep())) summary["checkpoint_sweep"] = ojson::parse(read_file(L.sweep()));
  write_json(L.summary(), summary);
}

void stage_sweep(const ExperimentConfig& config, const Layout& L, std::ostream& log) {
  const PreparedData data = load_or_prepare(config, L, log);
  const ErasureMask mask = read_mask(L.mask(), data.geometry.channels);
  const Dataset ys = read_tensor(L.degraded(Split::Train)).images;
  const ojson train_info = ojson::parse(read_file(L.train_json()));

  ojson rows = ojson::array();
  for (const auto& ck : train_info["checkpoints"]) {
    const double threshold = ck["threshold"].get<double>();
    if (!config.sweep.empty() &&
        std::none_of(config.sweep.begin(), config.sweep.end(), [&](double t) { return t == threshold; })) {
      continue;
    }
    const Model model = load_model(L.checkpoint(threshold));
    const auto results = recover_split(config, model, RecoveryMode::UnknownH, ys, mask, &data.train, Split::Train);
    const EvalSummary s = evaluate_split(results, data.train, config.thresholds);
    ojson row{{"threshold", threshold}, {"loss", ck["loss"]}, {"epoch", ck["epoch"]}};
    const ojson stats = to_json(s);
    for (const auto& [k, v] : stats.items()) row[k] = v;
    rows.push_back(row);
    log << "checkpoint " << format_number(threshold) << ": unknown-h approximate "
        << format_number(s.approximate_rate) << "%, accurate " << format_number(s.accurate_rate) << "%\n";
  }
  write_json(L.sweep(), rows);
}

void stage_proxcheck(const ExperimentConfig& config, const Layout& L, std::ostream& log) {
  const fs::path path = model_file(config, L);
  ojson j;
  if (fs::exists(path)) {
    const Model model = load_model(path);
    std::vector<Vector> extra;
    if (fs::exists(L.data(Split::Train))) extra = read_tensor(L.data(Split::Train)).images;
    const ProxReport rep = proxcheck_model(model, extra, config.proxcheck_probes, config.proxcheck_tol,
                                           derive_seed(config.seed, 6));
    j["report"] = to_json(rep);
    log << "proxcheck: " << to_string(rep.verdict) << "\n";
    if (rep.verdict != ProxVerdict::OutOfTheoremScope) {
      log << "  derivative range [" << format_number(rep.derivative_min) << ", " << format_number(rep.derivative_max)
          << "], sigma_max " << format_number(rep.sigma_max) << "\n"
          << "  eigenvalues [" << format_number(rep.eigen_min) << ", " << format_number(rep.eigen_max)
          << "], symmetry defect " << format_number(rep.jacobian_symmetry_defect) << ", jacobian error "
          << format_number(rep.analytic_vs_numeric_jacobian_maxerr) << "\n";
    }
  } else {
    const SweepResult sweep = theorem_sweep(config.proxcheck_sweep, derive_seed(config.seed, 7), config.proxcheck_tol);
    ojson reports = ojson::array();
    for (const auto& r : sweep.reports) reports.push_back(to_json(r));
    j["sweep"] = {{"total", sweep.total}, {"certified", sweep.certified}, {"reports", reports}};
    log << "proxcheck sweep: " << sweep.certified << "/" << sweep.total << " random tied autoencoders certified\n";
  }
  write_json(L.proxcheck(), j);
}

}  // namespace

void run_stage(Stage stage, const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  const Layout L{config.out};
  switch (stage) {
    case Stage::Train: stage_train(config, L, log); break;
    case Stage::Degrade: stage_degrade(config, L, log); break;
    case Stage::Recover: stage_recover(config, L, log); break;
    case Stage::Evaluate: stage_evaluate(config, L, log); break;
    case Stage::Proxcheck: stage_proxcheck(config, L, log); break;
    case Stage::E2E:
      stage_train(config, L, log);
      stage_degrade(config, L, log);
      stage_recover(config, L, log);
      stage_sweep(config, L, log);
      stage_evaluate(config, L, log);
      break;
  }
}

}  // namespace memprobe
