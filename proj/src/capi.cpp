#include "memprobe.h"

#include <iostream>
#include <sstream>
#include <string>

#include "memprobe/error.hpp"
#include "memprobe/experiment.hpp"
#include "memprobe/io.hpp"
#include "memprobe/metrics.hpp"
#include "memprobe/recovery.hpp"

struct memprobe_config {
  memprobe::ConfigMap map;
};

struct memprobe_model {
  memprobe::Model model;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
memprobe_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return MEMPROBE_OK;
  } catch (const memprobe::InvalidArgument& e) {
    g_last_error = e.what();
    return MEMPROBE_ERR_INVALID_ARGUMENT;
  } catch (const memprobe::DimensionError& e) {
    g_last_error = e.what();
    return MEMPROBE_ERR_DIMENSION;
  } catch (const memprobe::NumericalError& e) {
    g_last_error = e.what();
    return MEMPROBE_ERR_NUMERICAL;
  } catch (const memprobe::ParseError& e) {
    g_last_error = e.what();
    return MEMPROBE_ERR_PARSE;
  } catch (const memprobe::IoError& e) {
    g_last_error = e.what();
    return MEMPROBE_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MEMPROBE_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return MEMPROBE_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw memprobe::InvalidArgument(std::string(what) + " must not be null");
}

}  // namespace

extern "C" {

const char* memprobe_last_error(void) { return g_last_error.c_str(); }

const char* memprobe_version(void) { return "0.1.0"; }

memprobe_status memprobe_config_create(memprobe_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new memprobe_config{};
  });
}

void memprobe_config_destroy(memprobe_config* config) { delete config; }

memprobe_status memprobe_config_load(memprobe_config* config, const char* path) {
  return guarded([&] {
    require(config, "config");
    require(path, "path");
    memprobe::ConfigMap merged = config->map;
    for (auto& [k, v] : memprobe::read_config(path)) merged[k] = v;
    (void)memprobe::ExperimentConfig::from_map(merged);
    config->map = std::move(merged);
  });
}

memprobe_status memprobe_config_set(memprobe_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    memprobe::ConfigMap merged = config->map;
    merged[key] = value;
    (void)memprobe::ExperimentConfig::from_map(merged);
    config->map = std::move(merged);
  });
}

memprobe_status memprobe_run_stage(const memprobe_config* config, const char* stage, int verbose) {
  return guarded([&] {
    require(config, "config");
    require(stage, "stage");
    const auto cfg = memprobe::ExperimentConfig::from_map(config->map);
    const auto s = memprobe::stage_from_string(stage);
    if (verbose) {
      memprobe::run_stage(s, cfg, std::cerr);
    } else {
      std::ostringstream sink;
      memprobe::run_stage(s, cfg, sink);
    }
  });
}

memprobe_status memprobe_model_load(const char* path, memprobe_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new memprobe_model{memprobe::load_model(path)};
  });
}

void memprobe_model_destroy(memprobe_model* model) { delete model; }

memprobe_status memprobe_model_input_dim(const memprobe_model* model, size_t* out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = memprobe::input_dim(model->model);
  });
}

memprobe_status memprobe_model_forward(const memprobe_model* model, const double* x, size_t len, double* out) {
  return guarded([&] {
    require(model, "model");
    require(x, "x");
    require(out, "out");
    const auto y = memprobe::forward(model->model, std::span<const double>(x, len));
    std::copy(y.begin(), y.end(), out);
  });
}

memprobe_status memprobe_recover_unknown_h(const memprobe_model* model, const double* y, size_t len, double gamma,
                                           uint64_t seed, double* estimate, uint8_t* mask_out, size_t* outer_iters) {
  return guarded([&] {
    require(model, "model");
    require(y, "y");
    require(estimate, "estimate");
    memprobe::RecoveryConfig rc;
    rc.gamma = gamma;
    rc.seed = seed;
    const auto f = memprobe::as_function(model->model);
    const auto r = memprobe::recover_unknown_h(f, std::span<const double>(y, len), rc);
    std::copy(r.estimate.begin(), r.estimate.end(), estimate);
    if (mask_out) std::copy(r.mask_estimate.values().begin(), r.mask_estimate.values().end(), mask_out);
    if (outer_iters) *outer_iters = r.outer_iters;
  });
}

memprobe_status memprobe_mse(const double* a, const double* b, size_t len, double* out) {
  return guarded([&] {
    require(a, "a");
    require(b, "b");
    require(out, "out");
    *out = memprobe::mse(std::span<const double>(a, len), std::span<const double>(b, len));
  });
}

memprobe_status memprobe_psnr(double mse, double* out) {
  return guarded([&] {
    require(out, "out");
    *out = memprobe::psnr(mse);
  });
}

}  // extern "C"
