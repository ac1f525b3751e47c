#pragma once

#include "gsmforge/image.hpp"
#include "gsmforge/tensor.hpp"

namespace gsmforge {

struct MetricReport {
    double psnr_db = 0.0;
    double ms_ssim = 0.0;
    double bpp = 0.0;
    double delta_linf = 0.0;
};

double mse(const Tensor& a, const Tensor& b);

/// Peak 1.0; returns min(100, -10*log10(MSE)), with MSE < 1e-10 reported
/// as the 100 dB cap.
double psnr(const Tensor& a, const Tensor& b);
inline double psnr(const Image& a, const Image& b) { return psnr(a.t, b.t); }

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), k1=0.01, k2=0.03,
/// valid-mode windows, averaged over channels. Throws if either spatial
/// dim is smaller than the window.
double ssim(const Tensor& a, const Tensor& b, int window = 11, double k1 = 0.01,
            double k2 = 0.03);
inline double ssim(const Image& a, const Image& b) { return ssim(a.t, b.t); }

/// Multi-scale SSIM with 2x2 average-pool downsampling between scales.
/// Weights are the standard 5-scale vector truncated to `scales` entries
/// and renormalized. Requires spatial dims >= window * 2^(scales-1).
double ms_ssim(const Tensor& a, const Tensor& b, int scales = 3);
inline double ms_ssim(const Image& a, const Image& b, int scales = 3) {
    return ms_ssim(a.t, b.t, scales);
}

double linf(const Tensor& a, const Tensor& b);
inline double linf(const Image& a, const Image& b) { return linf(a.t, b.t); }

double l2norm(const Tensor& a);
double l2dist(const Tensor& a, const Tensor& b);

}  // namespace gsmforge
