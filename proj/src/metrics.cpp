#include "memprobe/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "memprobe/error.hpp"

namespace memprobe {

double mse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("mse: length mismatch");
  if (a.empty()) throw InvalidArgument("mse: empty vectors");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double r = a[i] - b[i];
    s += r * r;
  }
  return s / static_cast<double>(a.size());
}

double psnr(double mse_value) {
  if (std::isnan(mse_value) || mse_value < 0.0) throw InvalidArgument("psnr: mse must be nonnegative");
  if (mse_value == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse_value);
}

void EvalThresholds::validate() const {
  if (!(accurate_mse > 0.0) || !(accurate_mse < approximate_mse)) {
    throw InvalidArgument("thresholds: need 0 < accurate_mse < approximate_mse");
  }
}

EvalSummary summarize(std::span<const double> mses, const EvalThresholds& thresholds) {
  thresholds.validate();
  if (mses.empty()) throw InvalidArgument("summarize: no records");
  EvalSummary out;
  double psnr_sum = 0.0;
  for (std::size_t i = 0; i < mses.size(); ++i) {
    SampleRecord r;
    r.sample_id = i;
    r.mse = mses[i];
    r.psnr_db = psnr(mses[i]);
    r.accurate = mses[i] < thresholds.accurate_mse;
    r.approximate = mses[i] < thresholds.approximate_mse;
    out.accurate_count += r.accurate;
    out.approximate_count += r.approximate;
    psnr_sum += std::min(r.psnr_db, kPsnrClampDb);
    out.records.push_back(r);
  }
  const double n = static_cast<double>(mses.size());
  out.accurate_rate = 100.0 * static_cast<double>(out.accurate_count) / n;
  out.approximate_rate = 100.0 * static_cast<double>(out.approximate_count) / n;
  out.average_psnr = psnr_sum / n;
  return out;
}

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace memprobe
