#include "gsmforge/benchmark.hpp"

#include <algorithm>
#include <filesystem>
#include <stdexcept>

#include "gsmforge/ppm_io.hpp"
#include "gsmforge/rng.hpp"

namespace gsmforge {

namespace fs = std::filesystem;

BenchmarkSet make_benchmark(const std::string& source_dir, int crop, int pairs,
                            std::uint64_t seed) {
    if (crop <= 0 || crop % 8 != 0)
        throw std::invalid_argument("crop must be a positive multiple of 8, got " +
                                    std::to_string(crop));
    if (pairs < 0) throw std::invalid_argument("pairs must be >= 0");

    std::vector<std::string> files;
    if (!fs::is_directory(source_dir))
        throw std::runtime_error("benchmark source dir does not exist: " + source_dir);
    for (const auto& e : fs::directory_iterator(source_dir))
        if (e.is_regular_file() && e.path().extension() == ".ppm")
            files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.size() < 2)
        throw std::runtime_error("benchmark needs at least 2 .ppm images in " + source_dir +
                                 ", found " + std::to_string(files.size()));

    std::vector<Image> images;
    images.reserve(files.size());
    for (const std::string& f : files) {
        Image img = load_image(f);
        if (img.height() < crop || img.width() < crop)
            throw std::runtime_error("image " + f + " (" + std::to_string(img.width()) + "x" +
                                     std::to_string(img.height()) + ") is smaller than crop " +
                                     std::to_string(crop));
        images.push_back(std::move(img));
    }

    auto take_crop = [crop](const Image& img, int y, int x) {
        Image out(crop, crop);
        for (int c = 0; c < 3; ++c)
            for (int yy = 0; yy < crop; ++yy)
                for (int xx = 0; xx < crop; ++xx)
                    out.at(c, yy, xx) = img.at(c, y + yy, x + xx);
        return out;
    };

    // Last two sorted files play the role of the dataset's target images;
    // everything before them supplies sources.
    const std::size_t n_targets = 2;
    const std::size_t first_target = files.size() - n_targets;

    BenchmarkSet set;
    Rng rng(Rng::derive(seed, 0xb37c4c09ULL));

    std::vector<Image> target_imgs;
    std::vector<CropRecord> target_recs;
    for (std::size_t i = 0; i < n_targets; ++i) {
        const Image& src = images[first_target + i];
        int y = static_cast<int>(rng.next_u64() % (src.height() - crop + 1));
        int x = static_cast<int>(rng.next_u64() % (src.width() - crop + 1));
        target_imgs.push_back(take_crop(src, y, x));
        target_recs.push_back({files[first_target + i], y, x, crop});
    }

    for (int p = 0; p < pairs; ++p) {
        std::size_t si = static_cast<std::size_t>(p) % first_target;
        const Image& src = images[si];
        int y = static_cast<int>(rng.next_u64() % (src.height() - crop + 1));
        int x = static_cast<int>(rng.next_u64() % (src.width() - crop + 1));
        GsmPair pair;
        pair.source = take_crop(src, y, x);
        pair.target = target_imgs[p % n_targets];
        pair.validate();
        set.pairs.push_back(std::move(pair));
        set.source_crops.push_back({files[si], y, x, crop});
        set.target_crops.push_back(target_recs[p % n_targets]);
    }
    return set;
}

}  // namespace gsmforge
