#include "memprobe/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "memprobe/error.hpp"

namespace memprobe {

Dataset synthetic_images(std::size_t first_index, std::size_t count, std::size_t height, std::size_t width,
                         std::size_t channels, std::uint64_t seed) {
  if (height == 0 || width == 0 || channels == 0) throw InvalidArgument("synthetic_images: empty geometry");
  Dataset out;
  out.reserve(count);
  const double h = static_cast<double>(height);
  const double w = static_cast<double>(width);
  for (std::size_t n = 0; n < count; ++n) {
    Rng rng(derive_seed(seed, first_index + n));
    ImageVector img(height * width * channels, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
      const double gx = rng.uniform(-1.0, 1.0);
      const double gy = rng.uniform(-1.0, 1.0);
      const std::size_t blobs = 3 + rng.below(4);
      struct Blob {
        double cx, cy, radius, amp;
      };
      std::vector<Blob> bs;
      for (std::size_t b = 0; b < blobs; ++b) {
        bs.push_back({rng.uniform(0.0, w), rng.uniform(0.0, h), rng.uniform(0.08, 0.3) * w, rng.uniform(-1.5, 1.5)});
      }
      for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t col = 0; col < width; ++col) {
          const double x = static_cast<double>(col);
          const double y = static_cast<double>(r);
          double v = gx * x / w + gy * y / h;
          for (const auto& b : bs) {
            const double dx = x - b.cx;
            const double dy = y - b.cy;
            v += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.radius * b.radius));
          }
          img[(r * width + col) * channels + c] = v;
        }
      }
    }
    const auto [lo, hi] = std::minmax_element(img.begin(), img.end());
    const double lo_v = *lo;
    const double span = *hi - *lo;
    for (auto& v : img) v = span > 0.0 ? (v - lo_v) / span : 0.5;
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace memprobe
