#include "gsmforge/defense.hpp"

#include <cmath>
#include <stdexcept>

namespace gsmforge {

namespace {

// ITU-T T.81 Annex K reference tables.
constexpr int kLumaTable[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
constexpr int kChromaTable[64] = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

// BT.601 full-range RGB -> YCbCr, both with a +0.5 chroma offset in [0,1].
constexpr double kRgb2Ycc[9] = {0.299,     0.587,     0.114,
                                -0.168736, -0.331264, 0.5,
                                0.5,       -0.418688, -0.081312};
constexpr double kYcc2Rgb[9] = {1.0, 0.0,       1.402,
                                1.0, -0.344136, -0.714136,
                                1.0, 1.772,     0.0};
constexpr double kYccOffset[3] = {0.0, 0.5, 0.5};
// -kYcc2Rgb * kYccOffset, so that rgb = M_inv * ycc + kRgbOffset.
constexpr double kRgbOffset[3] = {-0.701, 0.529136, -0.886};

struct Dct8 {
    double m[8][8];
    Dct8() {
        for (int u = 0; u < 8; ++u) {
            double a = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            for (int x = 0; x < 8; ++x)
                m[u][x] = a * std::cos((2.0 * x + 1.0) * u * M_PI / 16.0);
        }
    }
};

const Dct8& dct8() {
    static const Dct8 d;
    return d;
}

void check_image_dims(const Tensor& t) {
    if (t.rank() != 3 || t.dim(0) != 3)
        throw std::invalid_argument("jpeg expects [3,H,W], got " + t.shape_str());
    if (t.dim(1) % 8 != 0 || t.dim(2) % 8 != 0)
        throw std::invalid_argument("jpeg needs spatial dims divisible by 8, got " + t.shape_str());
}

// y[c] = sum_j m[c*3+j] x[j] + off[c], per pixel. transpose_m applies the
// adjoint (no offset) for backward passes.
Tensor apply_color(const Tensor& in, const double* m, const double* off, bool transpose_m) {
    Tensor out(in.dims);
    const std::size_t plane = static_cast<std::size_t>(in.dim(1)) * in.dim(2);
    const double* p0 = in.data.data();
    const double* p1 = p0 + plane;
    const double* p2 = p1 + plane;
    double* o0 = out.data.data();
    double* o1 = o0 + plane;
    double* o2 = o1 + plane;
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < plane; ++i) {
        double a = p0[i], b = p1[i], c = p2[i];
        if (!transpose_m) {
            o0[i] = m[0] * a + m[1] * b + m[2] * c + (off ? off[0] : 0.0);
            o1[i] = m[3] * a + m[4] * b + m[5] * c + (off ? off[1] : 0.0);
            o2[i] = m[6] * a + m[7] * b + m[8] * c + (off ? off[2] : 0.0);
        } else {
            o0[i] = m[0] * a + m[3] * b + m[6] * c;
            o1[i] = m[1] * a + m[4] * b + m[7] * c;
            o2[i] = m[2] * a + m[5] * b + m[8] * c;
        }
    }
    return out;
}

// Blockwise 8x8 orthonormal DCT-II (inverse = transpose).
Tensor block_dct(const Tensor& in, bool inverse) {
    const Dct8& d = dct8();
    const int h = in.dim(1), w = in.dim(2);
    Tensor out(in.dims);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < 3; ++c) {
        const double* src = in.data.data() + plane * c;
        double* dst = out.data.data() + plane * c;
        double tmp[8][8];
        for (int by = 0; by < h; by += 8)
            for (int bx = 0; bx < w; bx += 8) {
                // rows: tmp = B * D^T (forward) or B * D (inverse)
                for (int y = 0; y < 8; ++y)
                    for (int u = 0; u < 8; ++u) {
                        double acc = 0.0;
                        for (int x = 0; x < 8; ++x) {
                            double dm = inverse ? d.m[x][u] : d.m[u][x];
                            acc += src[static_cast<std::size_t>(by + y) * w + bx + x] * dm;
                        }
                        tmp[y][u] = acc;
                    }
                // cols: out = D * tmp (forward) or D^T * tmp (inverse)
                for (int v = 0; v < 8; ++v)
                    for (int u = 0; u < 8; ++u) {
                        double acc = 0.0;
                        for (int y = 0; y < 8; ++y) {
                            double dm = inverse ? d.m[y][v] : d.m[v][y];
                            acc += dm * tmp[y][u];
                        }
                        dst[static_cast<std::size_t>(by + v) * w + bx + u] = acc;
                    }
            }
    }
    return out;
}

// Per-coefficient scale by the block-position table; divide or multiply.
Tensor table_scale(const Tensor& in, const std::vector<double>& luma,
                   const std::vector<double>& chroma, bool divide) {
    const int h = in.dim(1), w = in.dim(2);
    Tensor out(in.dims);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
#pragma omp parallel for schedule(static)
    for (int c = 0; c < 3; ++c) {
        const std::vector<double>& q = c == 0 ? luma : chroma;
        const double* src = in.data.data() + plane * c;
        double* dst = out.data.data() + plane * c;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double qq = q[(y % 8) * 8 + (x % 8)];
                std::size_t i = static_cast<std::size_t>(y) * w + x;
                dst[i] = divide ? src[i] / qq : src[i] * qq;
            }
    }
    return out;
}

inline double soft_round_value(double x, double sharpness) {
    return x - std::sin(2.0 * M_PI * x) / (2.0 * M_PI * sharpness);
}

inline double soft_round_deriv(double x, double sharpness) {
    return 1.0 - std::cos(2.0 * M_PI * x) / sharpness;
}

}  // namespace

void JpegConfig::validate() const {
    if (quality < 1 || quality > 100)
        throw std::invalid_argument("jpeg quality must be in [1,100], got " +
                                    std::to_string(quality));
    if (!(soft_sharpness > 0.0) || !std::isfinite(soft_sharpness))
        throw std::invalid_argument("soft_sharpness must be positive and finite");
}

std::vector<double> jpeg_quant_table(int quality, bool luma) {
    if (quality < 1 || quality > 100)
        throw std::invalid_argument("jpeg quality must be in [1,100], got " +
                                    std::to_string(quality));
    double scale = quality < 50 ? 5000.0 / quality : 200.0 - 2.0 * quality;
    const int* base = luma ? kLumaTable : kChromaTable;
    std::vector<double> t(64);
    for (int i = 0; i < 64; ++i) {
        double v = std::floor((base[i] * scale + 50.0) / 100.0);
        t[i] = v < 1.0 ? 1.0 : v;
    }
    return t;
}

Image jpeg_roundtrip(const Image& x, const JpegConfig& cfg) {
    cfg.validate();
    check_image_dims(x.t);
    auto luma = jpeg_quant_table(cfg.quality, true);
    auto chroma = jpeg_quant_table(cfg.quality, false);

    Tensor ycc = apply_color(x.t, kRgb2Ycc, kYccOffset, false);
    for (double& v : ycc.data) v = v * 255.0 - 128.0;
    Tensor coef = table_scale(block_dct(ycc, false), luma, chroma, true);
    if (cfg.rounding == JpegRounding::Hard) {
        for (double& v : coef.data) v = std::round(v);
    } else {
        for (double& v : coef.data) v = soft_round_value(v, cfg.soft_sharpness);
    }
    Tensor spat = block_dct(table_scale(coef, luma, chroma, false), true);
    for (double& v : spat.data) v = (v + 128.0) / 255.0;
    return clamp_to_image(apply_color(spat, kYcc2Rgb, kRgbOffset, false));
}

Graph::NodeId build_jpeg_roundtrip(Graph& g, Graph::NodeId x, const JpegConfig& cfg) {
    cfg.validate();
    check_image_dims(g.value(x));
    auto luma = jpeg_quant_table(cfg.quality, true);
    auto chroma = jpeg_quant_table(cfg.quality, false);

    auto color_node = [&](Graph::NodeId in, const double* m, const double* off) {
        Tensor v = apply_color(g.value(in), m, off, false);
        return g.custom(std::move(v), {in}, [in, m](Graph& gg, Graph::NodeId self) {
            Tensor go;
            go.dims = gg.value(self).dims;
            go.data = gg.grad(self);
            Tensor gin = apply_color(go, m, nullptr, true);
            auto& dst = gg.grad_mut(in);
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gin.data[i];
        });
    };
    auto dct_node = [&](Graph::NodeId in, bool inverse) {
        Tensor v = block_dct(g.value(in), inverse);
        return g.custom(std::move(v), {in}, [in, inverse](Graph& gg, Graph::NodeId self) {
            Tensor go;
            go.dims = gg.value(self).dims;
            go.data = gg.grad(self);
            Tensor gin = block_dct(go, !inverse);  // orthonormal: adjoint = inverse
            auto& dst = gg.grad_mut(in);
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gin.data[i];
        });
    };
    auto scale_node = [&](Graph::NodeId in, bool divide) {
        Tensor v = table_scale(g.value(in), luma, chroma, divide);
        return g.custom(std::move(v), {in}, [in, divide, luma, chroma](Graph& gg, Graph::NodeId self) {
            Tensor go;
            go.dims = gg.value(self).dims;
            go.data = gg.grad(self);
            Tensor gin = table_scale(go, luma, chroma, divide);
            auto& dst = gg.grad_mut(in);
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gin.data[i];
        });
    };

    Graph::NodeId n = color_node(x, kRgb2Ycc, kYccOffset);
    n = g.affine(n, 255.0, -128.0);
    n = dct_node(n, false);
    n = scale_node(n, true);
    if (cfg.rounding == JpegRounding::Hard) {
        n = g.round_hard(n);
    } else {
        const double sharp = cfg.soft_sharpness;
        Tensor v = g.value(n);
        for (double& w : v.data) w = soft_round_value(w, sharp);
        Graph::NodeId in = n;
        n = g.custom(std::move(v), {in}, [in, sharp](Graph& gg, Graph::NodeId self) {
            const auto& go = gg.grad(self);
            const auto& xin = gg.value(in).data;
            auto& dst = gg.grad_mut(in);
            for (std::size_t i = 0; i < dst.size(); ++i)
                dst[i] += go[i] * soft_round_deriv(xin[i], sharp);
        });
    }
    n = scale_node(n, false);
    n = dct_node(n, true);
    n = g.affine(n, 1.0 / 255.0, 128.0 / 255.0);
    n = color_node(n, kYcc2Rgb, kRgbOffset);
    return g.clamp01(n);
}

AttackResult attack_through_defense(const CodecModel& model, const GsmPair& pair,
                                    const AttackConfig& cfg_attack, const JpegConfig& cfg_jpeg,
                                    std::uint64_t pair_index) {
    JpegConfig soft = cfg_jpeg;
    soft.rounding = JpegRounding::Soft;
    ForwardBuilder builder = [&soft](Graph& g, const CodecNodes& p, Graph::NodeId xadv) {
        Graph::NodeId xj = build_jpeg_roundtrip(g, xadv, soft);
        return build_forward(g, p, xj, QuantMode::Ste, nullptr);
    };
    return run_attack(model, pair, cfg_attack, pair_index, &builder);
}

}  // namespace gsmforge
