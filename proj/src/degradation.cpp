#include "memprobe/degradation.hpp"

#include <algorithm>
#include <cmath>

#include "memprobe/error.hpp"

namespace memprobe {

ErasureMask::ErasureMask(std::vector<std::uint8_t> diag) : diag_(std::move(diag)) {
  for (auto v : diag_) {
    if (v > 1) throw InvalidArgument("erasure mask entries must be 0 or 1");
  }
}

ErasureMask ErasureMask::ones(std::size_t d) { return ErasureMask(std::vector<std::uint8_t>(d, 1)); }
ErasureMask ErasureMask::zeros(std::size_t d) { return ErasureMask(std::vector<std::uint8_t>(d, 0)); }

std::size_t ErasureMask::kept_count() const {
  return static_cast<std::size_t>(std::count(diag_.begin(), diag_.end(), std::uint8_t{1}));
}

double ErasureMask::kept_fraction() const {
  return diag_.empty() ? 0.0 : static_cast<double>(kept_count()) / static_cast<double>(diag_.size());
}

std::size_t ErasureMask::hamming(const ErasureMask& other) const {
  if (other.size() != size()) throw DimensionError("hamming: mask lengths differ");
  std::size_t n = 0;
  for (std::size_t i = 0; i < diag_.size(); ++i) n += diag_[i] != other.diag_[i];
  return n;
}

Vector ErasureMask::apply(std::span<const double> v) const {
  if (v.size() != size()) throw DimensionError("mask apply: length mismatch");
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = diag_[i] ? v[i] : 0.0;
  return out;
}

MaskPattern mask_pattern_from_string(const std::string& name) {
  if (name == "uniform_random" || name == "random") return MaskPattern::UniformRandom;
  if (name == "center_block" || name == "block") return MaskPattern::CenterBlock;
  if (name == "stripes") return MaskPattern::Stripes;
  if (name == "half") return MaskPattern::Half;
  throw InvalidArgument("unknown mask pattern '" + name + "'");
}

std::string to_string(MaskPattern pattern) {
  switch (pattern) {
    case MaskPattern::UniformRandom: return "uniform_random";
    case MaskPattern::CenterBlock: return "center_block";
    case MaskPattern::Stripes: return "stripes";
    case MaskPattern::Half: return "half";
  }
  return "unknown";
}

ErasureMask generate_mask(MaskPattern pattern, const MaskParams& params, const ImageGeometry& geometry, Rng& rng) {
  if (geometry.size() == 0) throw InvalidArgument("generate_mask: empty geometry");
  const std::size_t h = geometry.height;
  const std::size_t w = geometry.width;
  std::vector<std::uint8_t> pixel(h * w, 1);

  switch (pattern) {
    case MaskPattern::UniformRandom: {
      if (!(params.p_erase >= 0.0 && params.p_erase <= 1.0)) throw InvalidArgument("p_erase must lie in [0,1]");
      for (auto& p : pixel) p = rng.uniform() < params.p_erase ? 0 : 1;
      break;
    }
    case MaskPattern::CenterBlock: {
      if (!(params.block_fraction >= 0.0 && params.block_fraction <= 1.0)) {
        throw InvalidArgument("block_fraction must lie in [0,1]");
      }
      const double side = std::sqrt(params.block_fraction);
      const auto bh = static_cast<std::size_t>(std::llround(side * static_cast<double>(h)));
      const auto bw = static_cast<std::size_t>(std::llround(side * static_cast<double>(w)));
      const std::size_t r0 = (h - bh) / 2;
      const std::size_t c0 = (w - bw) / 2;
      for (std::size_t r = r0; r < r0 + bh; ++r)
        for (std::size_t c = c0; c < c0 + bw; ++c) pixel[r * w + c] = 0;
      break;
    }
    case MaskPattern::Stripes: {
      if (params.period == 0) throw InvalidArgument("stripes period must be positive");
      if (!(params.duty >= 0.0 && params.duty <= 1.0)) throw InvalidArgument("stripes duty must lie in [0,1]");
      const auto erased = static_cast<std::size_t>(std::llround(params.duty * static_cast<double>(params.period)));
      for (std::size_t r = 0; r < h; ++r) {
        if (r % params.period < erased) {
          for (std::size_t c = 0; c < w; ++c) pixel[r * w + c] = 0;
        }
      }
      break;
    }
    case MaskPattern::Half: {
      const auto& s = params.side;
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
          bool erase;
          if (s == "left") erase = c < w / 2;
          else if (s == "right") erase = c >= w - w / 2;
          else if (s == "top") erase = r < h / 2;
          else if (s == "bottom") erase = r >= h - h / 2;
          else throw InvalidArgument("half side must be left, right, top or bottom");
          if (erase) pixel[r * w + c] = 0;
        }
      }
      break;
    }
  }

  std::vector<std::uint8_t> diag(geometry.size());
  for (std::size_t p = 0; p < pixel.size(); ++p)
    for (std::size_t c = 0; c < geometry.channels; ++c) diag[p * geometry.channels + c] = pixel[p];
  return ErasureMask(std::move(diag));
}

ImageVector degrade(std::span<const double> x, const DegradationSpec& spec) {
  if (x.size() != spec.mask.size()) throw DimensionError("degrade: image and mask lengths differ");
  if (!(spec.sigma_eps >= 0.0)) throw InvalidArgument("degrade: sigma_eps must be nonnegative");
  ImageVector y = spec.mask.apply(x);
  if (spec.sigma_eps > 0.0) {
    Rng rng(spec.seed);
    const Vector noise = gaussian_vector(rng, y.size(), spec.sigma_eps);
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (!spec.noise_on_kept_only || spec.mask.kept(i)) y[i] += noise[i];
    }
  }
  return y;
}

}  // namespace memprobe
