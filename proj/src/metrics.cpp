#include "gsmforge/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace gsmforge {

namespace {

void check_same(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + " shape mismatch: " + a.shape_str() +
                                    " vs " + b.shape_str());
}

std::vector<double> gaussian_window(int window, double sigma) {
    std::vector<double> w(window);
    double c = (window - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < window; ++i) {
        w[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

// Valid-mode separable filter of one plane: [h,w] -> [h-window+1, w-window+1].
void filter_valid(const double* src, int h, int w, const std::vector<double>& win,
                  std::vector<double>& tmp, std::vector<double>& dst) {
    const int window = static_cast<int>(win.size());
    const int ow = w - window + 1;
    const int oh = h - window + 1;
    tmp.assign(static_cast<std::size_t>(h) * ow, 0.0);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        const double* srow = src + static_cast<std::size_t>(y) * w;
        double* trow = tmp.data() + static_cast<std::size_t>(y) * ow;
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < window; ++i) acc += win[i] * srow[x + i];
            trow[x] = acc;
        }
    }
    dst.assign(static_cast<std::size_t>(oh) * ow, 0.0);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < oh; ++y) {
        double* drow = dst.data() + static_cast<std::size_t>(y) * ow;
        for (int i = 0; i < window; ++i) {
            const double wv = win[i];
            const double* trow = tmp.data() + static_cast<std::size_t>(y + i) * ow;
            for (int x = 0; x < ow; ++x) drow[x] += wv * trow[x];
        }
    }
}

struct SsimStats {
    double ssim = 0.0;  // full index
    double cs = 0.0;    // contrast-structure term only
};

SsimStats ssim_stats(const Tensor& a, const Tensor& b, int window, double k1, double k2) {
    check_same(a, b, "ssim");
    if (a.rank() != 3)
        throw std::invalid_argument("ssim expects [C,H,W], got " + a.shape_str());
    const int c = a.dim(0), h = a.dim(1), w = a.dim(2);
    if (h < window || w < window)
        throw std::invalid_argument("image " + a.shape_str() + " smaller than ssim window " +
                                    std::to_string(window));
    const double c1 = k1 * k1, c2 = k2 * k2;  // peak L = 1
    const auto win = gaussian_window(window, 1.5);
    const std::size_t plane = static_cast<std::size_t>(h) * w;

    std::vector<double> tmp, mu_a, mu_b, m_aa, m_bb, m_ab;
    std::vector<double> sq(plane);
    double ssim_sum = 0.0, cs_sum = 0.0;
    for (int ci = 0; ci < c; ++ci) {
        const double* pa = a.data.data() + plane * ci;
        const double* pb = b.data.data() + plane * ci;
        filter_valid(pa, h, w, win, tmp, mu_a);
        filter_valid(pb, h, w, win, tmp, mu_b);
        for (std::size_t i = 0; i < plane; ++i) sq[i] = pa[i] * pa[i];
        filter_valid(sq.data(), h, w, win, tmp, m_aa);
        for (std::size_t i = 0; i < plane; ++i) sq[i] = pb[i] * pb[i];
        filter_valid(sq.data(), h, w, win, tmp, m_bb);
        for (std::size_t i = 0; i < plane; ++i) sq[i] = pa[i] * pb[i];
        filter_valid(sq.data(), h, w, win, tmp, m_ab);

        double s_acc = 0.0, cs_acc = 0.0;
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            double ma = mu_a[i], mb = mu_b[i];
            double va = m_aa[i] - ma * ma;
            double vb = m_bb[i] - mb * mb;
            double vab = m_ab[i] - ma * mb;
            double cs = (2.0 * vab + c2) / (va + vb + c2);
            double lum = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            s_acc += lum * cs;
            cs_acc += cs;
        }
        ssim_sum += s_acc / static_cast<double>(mu_a.size());
        cs_sum += cs_acc / static_cast<double>(mu_a.size());
    }
    return {ssim_sum / c, cs_sum / c};
}

Tensor downsample2(const Tensor& a) {
    const int c = a.dim(0), h = a.dim(1) / 2, w = a.dim(2) / 2;
    Tensor out({c, h, w});
    const std::size_t plane_in = static_cast<std::size_t>(a.dim(1)) * a.dim(2);
    for (int ci = 0; ci < c; ++ci) {
        const double* p = a.data.data() + plane_in * ci;
        double* o = out.data.data() + static_cast<std::size_t>(ci) * h * w;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                o[static_cast<std::size_t>(y) * w + x] =
                    0.25 * (p[static_cast<std::size_t>(2 * y) * a.dim(2) + 2 * x] +
                            p[static_cast<std::size_t>(2 * y) * a.dim(2) + 2 * x + 1] +
                            p[static_cast<std::size_t>(2 * y + 1) * a.dim(2) + 2 * x] +
                            p[static_cast<std::size_t>(2 * y + 1) * a.dim(2) + 2 * x + 1]);
    }
    return out;
}

constexpr double kMsSsimWeights5[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

}  // namespace

double mse(const Tensor& a, const Tensor& b) {
    check_same(a, b, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.numel());
}

double psnr(const Tensor& a, const Tensor& b) {
    double m = mse(a, b);
    if (m < 1e-10) return 100.0;
    double v = -10.0 * std::log10(m);
    return v > 100.0 ? 100.0 : v;
}

double ssim(const Tensor& a, const Tensor& b, int window, double k1, double k2) {
    return ssim_stats(a, b, window, k1, k2).ssim;
}

double ms_ssim(const Tensor& a, const Tensor& b, int scales) {
    check_same(a, b, "ms_ssim");
    if (scales < 1 || scales > 5)
        throw std::invalid_argument("ms_ssim scales must be in [1,5], got " + std::to_string(scales));
    const int window = 11;
    int need = window << (scales - 1);
    if (a.dim(1) < need || a.dim(2) < need)
        throw std::invalid_argument("image " + a.shape_str() + " too small for " +
                                    std::to_string(scales) + " ms_ssim scales (needs >= " +
                                    std::to_string(need) + " px)");
    double wsum = 0.0;
    for (int s = 0; s < scales; ++s) wsum += kMsSsimWeights5[s];

    Tensor ca = a, cb = b;
    double value = 1.0;
    for (int s = 0; s < scales; ++s) {
        SsimStats st = ssim_stats(ca, cb, window, 0.01, 0.03);
        double term = (s == scales - 1) ? st.ssim : st.cs;
        if (term < 0.0) term = 0.0;
        value *= std::pow(term, kMsSsimWeights5[s] / wsum);
        if (s + 1 < scales) {
            ca = downsample2(ca);
            cb = downsample2(cb);
        }
    }
    return value;
}

double linf(const Tensor& a, const Tensor& b) {
    check_same(a, b, "linf");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = std::fabs(a.data[i] - b.data[i]);
        if (d > m) m = d;
    }
    return m;
}

double l2norm(const Tensor& a) {
    double acc = 0.0;
    for (double x : a.data) acc += x * x;
    return std::sqrt(acc);
}

double l2dist(const Tensor& a, const Tensor& b) {
    check_same(a, b, "l2dist");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace gsmforge
