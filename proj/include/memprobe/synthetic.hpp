#pragma once

#include <cstddef>
#include <cstdint>

#include "memprobe/trainer.hpp"

namespace memprobe {

// Deterministic desk-scale image set: each image is a random linear ramp
// plus a handful of signed Gaussian blobs, min-max scaled to [0,1]. Image
// `i` depends only on (seed, i), so a held-out set is simply a disjoint
// index range of the same generator.
Dataset synthetic_images(std::size_t first_index, std::size_t count, std::size_t height, std::size_t width,
                         std::size_t channels, std::uint64_t seed);

}  // namespace memprobe
