#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "memprobe/autoencoder.hpp"
#include "memprobe/degradation.hpp"

namespace memprobe {

// ---------------------------------------------------------------------------
// Raw float tensor: 16-byte header {"MPRB", version u16, h u16, w u16,
// c u16, count u32} followed by count·h·w·c little-endian float64 values,
// image-major, pixel-major (HWC) inside each image.

inline constexpr std::uint16_t kTensorVersion = 1;

struct TensorFile {
  ImageGeometry geometry;
  std::vector<ImageVector> images;
};

std::string encode_tensor(const TensorFile& tensor);
TensorFile decode_tensor(const std::string& bytes);
void write_tensor(const std::filesystem::path& path, const TensorFile& tensor);
TensorFile read_tensor(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Binary PGM (P5) / PPM (P6). Reading scales by 1/maxval; writing clips to
// [0,1] and quantizes to 8 bits.

struct PnmImage {
  ImageGeometry geometry;
  ImageVector pixels;
};

PnmImage decode_pnm(const std::string& bytes);
PnmImage read_pnm(const std::filesystem::path& path);
std::string encode_pnm(const ImageGeometry& geometry, std::span<const double> pixels);
void write_pnm(const std::filesystem::path& path, const ImageGeometry& geometry, std::span<const double> pixels);

// ---------------------------------------------------------------------------
// Models: {"MPMD", version u32, tied u8, layer count u32, per layer
// {in u32, out u32, has_bias u8, has_activation u8, activation kind u8,
// activation param f64}} followed by each layer's weights (row-major) and
// bias as little-endian float64.

inline constexpr std::uint32_t kModelVersion = 1;

std::string encode_model(const Model& model);
Model decode_model(const std::string& bytes);
void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Masks: ASCII PBM (P1) when the geometry is known, otherwise a length
// header line followed by one 0/1 per line. 1 means "pixel kept" in both.

std::string encode_mask(const ErasureMask& mask, const std::optional<ImageGeometry>& geometry);
ErasureMask decode_mask(const std::string& text, std::size_t channels = 1);
void write_mask(const std::filesystem::path& path, const ErasureMask& mask,
                const std::optional<ImageGeometry>& geometry = std::nullopt);
ErasureMask read_mask(const std::filesystem::path& path, std::size_t channels = 1);

// ---------------------------------------------------------------------------
// Datasets

struct ImageRecord {
  std::string sample_id;
  ImageVector pixels;  // within [0,1]
  ImageGeometry geometry;
};

// Reads every .mprb/.pgm/.ppm file in `dir` (sorted by name). Tensor
// values already in [0,1] are kept bit-exact; an image with values outside
// is min-max rescaled. When `limit` is below the number of images, a
// seed-determined subset is kept in its original order.
std::vector<ImageRecord> load_dataset(const std::filesystem::path& dir, const std::optional<ImageGeometry>& geometry,
                                      std::size_t limit, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Flat key=value config with dotted section prefixes; '#' starts a comment.

using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config(const std::string& text);
ConfigMap read_config(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace memprobe
