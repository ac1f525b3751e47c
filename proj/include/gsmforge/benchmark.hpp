#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsmforge/attack.hpp"

namespace gsmforge {

struct CropRecord {
    std::string source_file;
    int y = 0, x = 0, size = 0;
};

struct BenchmarkSet {
    std::vector<GsmPair> pairs;
    std::vector<CropRecord> source_crops;  // one per pair
    std::vector<CropRecord> target_crops;  // one per pair (alternating targets)
};

/// Deterministically builds victim-target pairs from a directory of PPM
/// images. The last two files (sorted by name) provide one target crop
/// each; the remaining files provide `pairs` source crops, round-robin.
/// Crop must be divisible by 8 and fit inside every selected image.
BenchmarkSet make_benchmark(const std::string& source_dir, int crop, int pairs,
                            std::uint64_t seed);

}  // namespace gsmforge
