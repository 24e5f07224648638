#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace memprobe {

// (1/d)‖a − b‖²
double mse(std::span<const double> a, std::span<const double> b);

// 10·log10(1/mse) for images in [0,1]; +inf when mse == 0.
double psnr(double mse_value);

inline constexpr double kPsnrClampDb = 150.0;

struct EvalThresholds {
  double accurate_mse = 1e-7;
  double approximate_mse = 5e-4;

  void validate() const;
};

struct SampleRecord {
  std::size_t sample_id = 0;
  double mse = 0.0;
  double psnr_db = 0.0;
  bool accurate = false;
  bool approximate = false;
};

struct EvalSummary {
  double accurate_rate = 0.0;     // percent
  double approximate_rate = 0.0;  // percent
  double average_psnr = 0.0;      // dB, infinite entries clamped
  std::size_t accurate_count = 0;
  std::size_t approximate_count = 0;
  std::vector<SampleRecord> records;
};

// Rates use strict "<" against the thresholds. Sample ids are the positions
// in `mses`.
EvalSummary summarize(std::span<const double> mses, const EvalThresholds& thresholds = {});

// Number rendered for reports: "inf" for +inf, shortest round-trip text otherwise.
std::string format_number(double v);

}  // namespace memprobe
