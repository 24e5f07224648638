#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "memprobe/autoencoder.hpp"

namespace memprobe {

// Diagonal of a 0/1 erasure operator: 1 = pixel kept, 0 = erased.
class ErasureMask {
 public:
  ErasureMask() = default;
  explicit ErasureMask(std::vector<std::uint8_t> diag);
  static ErasureMask ones(std::size_t d);
  static ErasureMask zeros(std::size_t d);

  std::size_t size() const { return diag_.size(); }
  bool kept(std::size_t i) const { return diag_[i] != 0; }
  std::uint8_t operator[](std::size_t i) const { return diag_[i]; }
  void set(std::size_t i, bool keep) { diag_[i] = keep ? 1 : 0; }

  const std::vector<std::uint8_t>& values() const { return diag_; }
  std::size_t kept_count() const;
  double kept_fraction() const;
  // Number of coordinates where the masks disagree.
  std::size_t hamming(const ErasureMask& other) const;

  // H v
  Vector apply(std::span<const double> v) const;

  bool operator==(const ErasureMask&) const = default;

 private:
  std::vector<std::uint8_t> diag_;
};

struct ImageGeometry {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;

  std::size_t pixels() const { return height * width; }
  std::size_t size() const { return height * width * channels; }
  bool operator==(const ImageGeometry&) const = default;
};

enum class MaskPattern { UniformRandom, CenterBlock, Stripes, Half };

// Pattern parameters; only those relevant to the chosen pattern are read.
struct MaskParams {
  double p_erase = 0.5;        // UniformRandom
  double block_fraction = 0.25;  // CenterBlock: erased area fraction
  std::size_t period = 4;      // Stripes: rows per period
  double duty = 0.5;           // Stripes: erased fraction of each period
  std::string side = "left";   // Half: left|right|top|bottom
};

MaskPattern mask_pattern_from_string(const std::string& name);
std::string to_string(MaskPattern pattern);

// A pixel covers all its channels; the mask is replicated across them.
ErasureMask generate_mask(MaskPattern pattern, const MaskParams& params, const ImageGeometry& geometry, Rng& rng);

struct DegradationSpec {
  ErasureMask mask;
  double sigma_eps = 0.0;
  std::uint64_t seed = 0;
  // Restrict the additive noise to kept coordinates. Off by default: the
  // noise term is added after the erasure operator.
  bool noise_on_kept_only = false;
};

// y = H x + ε with ε ~ N(0, σ² I). Output is not clipped.
ImageVector degrade(std::span<const double> x, const DegradationSpec& spec);

}  // namespace memprobe
