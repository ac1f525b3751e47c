#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gsmforge/image.hpp"
#include "gsmforge/rng.hpp"
#include "gsmforge/tensor.hpp"

namespace testutil {

inline gsmforge::Tensor random_tensor(std::vector<int> dims, gsmforge::Rng& rng,
                                      double scale = 1.0) {
    gsmforge::Tensor t(std::move(dims));
    for (double& v : t.data) v = rng.uniform_symmetric(scale);
    return t;
}

/// Synthetic test image: low-frequency sinusoids and a gradient for smooth
/// structure, plus a few constant-color rectangles for hard edges,
/// normalized into [0.05, 0.95]. Distinct seeds give visually distinct
/// images.
inline gsmforge::Image synthetic_image(std::uint64_t seed, int h, int w) {
    gsmforge::Rng rng(gsmforge::Rng::derive(seed, 0x5157ULL));
    gsmforge::Image img(h, w);
    for (int c = 0; c < 3; ++c) {
        double base = 0.25 + 0.5 * rng.uniform_open();
        double gx = rng.uniform_symmetric(0.3), gy = rng.uniform_symmetric(0.3);
        struct Wave {
            double fx, fy, ph, amp;
        } waves[4];
        for (Wave& wv : waves) {
            wv.fx = rng.uniform(0.5, 4.5);
            wv.fy = rng.uniform(0.5, 4.5);
            wv.ph = rng.uniform(0.0, 2.0 * M_PI);
            wv.amp = rng.uniform(0.05, 0.2);
        }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double u = static_cast<double>(x) / w, v = static_cast<double>(y) / h;
                double val = base + gx * (u - 0.5) + gy * (v - 0.5);
                for (const Wave& wv : waves)
                    val += wv.amp * std::sin(2.0 * M_PI * (wv.fx * u + wv.fy * v) + wv.ph);
                img.at(c, y, x) = val;
            }
    }
    const int rects = 3 + static_cast<int>(rng.next_u64() % 3);
    for (int r = 0; r < rects; ++r) {
        int rw = 2 + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(w / 2));
        int rh = 2 + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(h / 2));
        int x0 = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(w - rw + 1));
        int y0 = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(h - rh + 1));
        double col[3], blend = rng.uniform(0.55, 1.0);
        for (double& cc : col) cc = rng.uniform_open();
        for (int c = 0; c < 3; ++c)
            for (int y = y0; y < y0 + rh; ++y)
                for (int x = x0; x < x0 + rw; ++x)
                    img.at(c, y, x) = (1.0 - blend) * img.at(c, y, x) + blend * col[c];
    }
    double lo = 1e18, hi = -1e18;
    for (double v : img.t.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (double& v : img.t.data) v = 0.05 + 0.9 * (v - lo) / (hi - lo);
    return img;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace testutil
