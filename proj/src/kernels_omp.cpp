#include "gsmforge/kernels.hpp"

#include <cstring>
#include <stdexcept>
#include <vector>

namespace gsmforge {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

ConvGeom check_common(const std::vector<int>& in_dims, const std::vector<int>& kernel_dims,
                      const std::vector<int>& bias_dims, int stride, int pad, bool transposed) {
    require(in_dims.size() == 3, "input must be [C,H,W], got " + shape_str(in_dims));
    require(kernel_dims.size() == 4, "kernel must be 4-d, got " + shape_str(kernel_dims));
    require(bias_dims.size() == 1, "bias must be 1-d, got " + shape_str(bias_dims));
    require(stride >= 1, "stride must be >= 1, got " + std::to_string(stride));
    require(pad >= 0, "pad must be >= 0, got " + std::to_string(pad));
    require(kernel_dims[2] == kernel_dims[3],
            "kernel must be square, got " + shape_str(kernel_dims));

    ConvGeom g;
    g.cin = in_dims[0];
    g.h = in_dims[1];
    g.w = in_dims[2];
    g.k = kernel_dims[2];
    g.stride = stride;
    g.pad = pad;
    int kin = transposed ? kernel_dims[0] : kernel_dims[1];
    g.cout = transposed ? kernel_dims[1] : kernel_dims[0];
    require(kin == g.cin, "kernel input channels " + std::to_string(kin) +
                              " do not match input channels " + std::to_string(g.cin) +
                              " (input " + shape_str(in_dims) + ", kernel " + shape_str(kernel_dims) + ")");
    require(bias_dims[0] == g.cout, "bias length " + std::to_string(bias_dims[0]) +
                                        " does not match output channels " + std::to_string(g.cout));
    return g;
}

}  // namespace

ConvGeom conv2d_geometry(const std::vector<int>& in_dims, const std::vector<int>& kernel_dims,
                         const std::vector<int>& bias_dims, int stride, int pad) {
    ConvGeom g = check_common(in_dims, kernel_dims, bias_dims, stride, pad, false);
    int num_h = g.h + 2 * pad - g.k;
    int num_w = g.w + 2 * pad - g.k;
    require(num_h >= 0 && num_w >= 0, "kernel " + std::to_string(g.k) + " larger than padded input " +
                                          shape_str(in_dims) + " with pad " + std::to_string(pad));
    require(num_h % stride == 0 && num_w % stride == 0,
            "non-integral conv output size for input " + shape_str(in_dims) + ", kernel " +
                std::to_string(g.k) + ", stride " + std::to_string(stride) + ", pad " + std::to_string(pad));
    g.oh = num_h / stride + 1;
    g.ow = num_w / stride + 1;
    return g;
}

ConvGeom deconv2d_geometry(const std::vector<int>& in_dims, const std::vector<int>& kernel_dims,
                           const std::vector<int>& bias_dims, int stride, int pad) {
    ConvGeom g = check_common(in_dims, kernel_dims, bias_dims, stride, pad, true);
    g.oh = (g.h - 1) * stride - 2 * pad + g.k;
    g.ow = (g.w - 1) * stride - 2 * pad + g.k;
    require(g.oh > 0 && g.ow > 0, "deconv output size " + std::to_string(g.oh) + "x" +
                                      std::to_string(g.ow) + " is not positive");
    return g;
}

namespace kernels {

namespace {

// cols[(c*k + ky)*k + kx][gy*gw + gx] = img[c][gy*stride - pad + ky][gx*stride - pad + kx]
// where (gy,gx) ranges over the conv output grid [gh, gw].
void im2col(const double* img, int c, int ih, int iw, int k, int stride, int pad,
            int gh, int gw, double* cols) {
    const std::size_t n = static_cast<std::size_t>(gh) * gw;
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < c; ++ci) {
        const double* ip = img + static_cast<std::size_t>(ci) * ih * iw;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                double* cp = cols + (static_cast<std::size_t>((ci * k + ky) * k + kx)) * n;
                for (int gy = 0; gy < gh; ++gy) {
                    int iy = gy * stride - pad + ky;
                    double* crow = cp + static_cast<std::size_t>(gy) * gw;
                    if (iy < 0 || iy >= ih) {
                        std::memset(crow, 0, sizeof(double) * gw);
                        continue;
                    }
                    const double* irow = ip + static_cast<std::size_t>(iy) * iw;
                    for (int gx = 0; gx < gw; ++gx) {
                        int ix = gx * stride - pad + kx;
                        crow[gx] = (ix >= 0 && ix < iw) ? irow[ix] : 0.0;
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-add cols back into the image. Parallel over
// channels; each image element is owned by one thread.
void col2im_add(const double* cols, int c, int ih, int iw, int k, int stride, int pad,
                int gh, int gw, double* img) {
    const std::size_t n = static_cast<std::size_t>(gh) * gw;
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < c; ++ci) {
        double* ip = img + static_cast<std::size_t>(ci) * ih * iw;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const double* cp = cols + (static_cast<std::size_t>((ci * k + ky) * k + kx)) * n;
                for (int gy = 0; gy < gh; ++gy) {
                    int iy = gy * stride - pad + ky;
                    if (iy < 0 || iy >= ih) continue;
                    double* irow = ip + static_cast<std::size_t>(iy) * iw;
                    const double* crow = cp + static_cast<std::size_t>(gy) * gw;
                    for (int gx = 0; gx < gw; ++gx) {
                        int ix = gx * stride - pad + kx;
                        if (ix >= 0 && ix < iw) irow[ix] += crow[gx];
                    }
                }
            }
        }
    }
}

// out[m][n] = sum_kd a[m][kd] * b[kd][n] (+ out when accumulate).
// Row blocks of four keep the n-contiguous inner loop vectorizable while
// streaming b only once per block.
void gemm_a_b(int m, int kd, std::size_t n, const double* a, const double* b, double* out,
              bool accumulate) {
    int mb = (m + 3) / 4;
#pragma omp parallel for schedule(static)
    for (int blk = 0; blk < mb; ++blk) {
        int m0 = blk * 4;
        int rows = (m - m0) < 4 ? (m - m0) : 4;
        for (int r = 0; r < rows; ++r) {
            double* orow = out + static_cast<std::size_t>(m0 + r) * n;
            if (!accumulate) std::memset(orow, 0, sizeof(double) * n);
        }
        switch (rows) {
            case 4: {
                double* o0 = out + static_cast<std::size_t>(m0 + 0) * n;
                double* o1 = out + static_cast<std::size_t>(m0 + 1) * n;
                double* o2 = out + static_cast<std::size_t>(m0 + 2) * n;
                double* o3 = out + static_cast<std::size_t>(m0 + 3) * n;
                const double* a0 = a + static_cast<std::size_t>(m0 + 0) * kd;
                const double* a1 = a + static_cast<std::size_t>(m0 + 1) * kd;
                const double* a2 = a + static_cast<std::size_t>(m0 + 2) * kd;
                const double* a3 = a + static_cast<std::size_t>(m0 + 3) * kd;
                for (int q = 0; q < kd; ++q) {
                    const double w0 = a0[q], w1 = a1[q], w2 = a2[q], w3 = a3[q];
                    const double* brow = b + static_cast<std::size_t>(q) * n;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double v = brow[j];
                        o0[j] += w0 * v;
                        o1[j] += w1 * v;
                        o2[j] += w2 * v;
                        o3[j] += w3 * v;
                    }
                }
                break;
            }
            default: {
                for (int r = 0; r < rows; ++r) {
                    double* orow = out + static_cast<std::size_t>(m0 + r) * n;
                    const double* arow = a + static_cast<std::size_t>(m0 + r) * kd;
                    for (int q = 0; q < kd; ++q) {
                        const double w = arow[q];
                        const double* brow = b + static_cast<std::size_t>(q) * n;
                        for (std::size_t j = 0; j < n; ++j) orow[j] += w * brow[j];
                    }
                }
                break;
            }
        }
    }
}

// out[kd][n] = sum_m a[m][kd] * b[m][n] (+ out when accumulate).
void gemm_at_b(int m, int kd, std::size_t n, const double* a, const double* b, double* out,
               bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int q = 0; q < kd; ++q) {
        double* orow = out + static_cast<std::size_t>(q) * n;
        if (!accumulate) std::memset(orow, 0, sizeof(double) * n);
        for (int r = 0; r < m; ++r) {
            const double w = a[static_cast<std::size_t>(r) * kd + q];
            const double* brow = b + static_cast<std::size_t>(r) * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += w * brow[j];
        }
    }
}

// out[m][kd] += sum_n a[m][n] * b[kd][n]  (dot products over contiguous n).
void gemm_a_bt_add(int m, int kd, std::size_t n, const double* a, const double* b, double* out) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < m; ++r) {
        const double* arow = a + static_cast<std::size_t>(r) * n;
        double* orow = out + static_cast<std::size_t>(r) * kd;
        for (int q = 0; q < kd; ++q) {
            const double* brow = b + static_cast<std::size_t>(q) * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            orow[q] += acc;
        }
    }
}

void add_bias_rows(double* out, const double* bias, int c, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < c; ++ci) {
        double* row = out + static_cast<std::size_t>(ci) * n;
        const double b = bias[ci];
        for (std::size_t j = 0; j < n; ++j) row[j] += b;
    }
}

}  // namespace

Tensor conv2d_forward(const Tensor& in, const Tensor& kernel, const Tensor& bias,
                      int stride, int pad) {
    ConvGeom g = conv2d_geometry(in.dims, kernel.dims, bias.dims, stride, pad);
    const int kd = g.cin * g.k * g.k;
    const std::size_t n = static_cast<std::size_t>(g.oh) * g.ow;
    std::vector<double> cols(static_cast<std::size_t>(kd) * n);
    im2col(in.data.data(), g.cin, g.h, g.w, g.k, stride, pad, g.oh, g.ow, cols.data());

    Tensor out({g.cout, g.oh, g.ow});
    gemm_a_b(g.cout, kd, n, kernel.data.data(), cols.data(), out.data.data(), false);
    add_bias_rows(out.data.data(), bias.data.data(), g.cout, n);
    return out;
}

void conv2d_backward(const Tensor& in, const Tensor& kernel, const Tensor& grad_out,
                     int stride, int pad,
                     std::vector<double>* grad_in, std::vector<double>* grad_kernel,
                     std::vector<double>* grad_bias) {
    ConvGeom g = conv2d_geometry(in.dims, kernel.dims, {kernel.dims[0]}, stride, pad);
    if (grad_out.dims != std::vector<int>{g.cout, g.oh, g.ow})
        throw std::invalid_argument("conv2d grad_out shape " + grad_out.shape_str() +
                                    " does not match output " + shape_str({g.cout, g.oh, g.ow}));
    const int kd = g.cin * g.k * g.k;
    const std::size_t n = static_cast<std::size_t>(g.oh) * g.ow;

    if (grad_bias) {
#pragma omp parallel for schedule(static)
        for (int co = 0; co < g.cout; ++co) {
            const double* grow = grad_out.data.data() + static_cast<std::size_t>(co) * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j];
            (*grad_bias)[co] += acc;
        }
    }
    if (grad_kernel) {
        std::vector<double> cols(static_cast<std::size_t>(kd) * n);
        im2col(in.data.data(), g.cin, g.h, g.w, g.k, stride, pad, g.oh, g.ow, cols.data());
        gemm_a_bt_add(g.cout, kd, n, grad_out.data.data(), cols.data(), grad_kernel->data());
    }
    if (grad_in) {
        std::vector<double> gcols(static_cast<std::size_t>(kd) * n);
        gemm_at_b(g.cout, kd, n, kernel.data.data(), grad_out.data.data(), gcols.data(), false);
        col2im_add(gcols.data(), g.cin, g.h, g.w, g.k, stride, pad, g.oh, g.ow, grad_in->data());
    }
}

Tensor deconv2d_forward(const Tensor& in, const Tensor& kernel, const Tensor& bias,
                        int stride, int pad) {
    ConvGeom g = deconv2d_geometry(in.dims, kernel.dims, bias.dims, stride, pad);
    const int kd = g.cout * g.k * g.k;
    const std::size_t n = static_cast<std::size_t>(g.h) * g.w;

    // V = reshape(kernel, [cin, cout*k*k])^T * in_flat, then scatter V onto
    // the output image: deconv is the adjoint of conv over the output grid.
    std::vector<double> v(static_cast<std::size_t>(kd) * n);
    gemm_at_b(g.cin, kd, n, kernel.data.data(), in.data.data(), v.data(), false);

    Tensor out({g.cout, g.oh, g.ow});
    col2im_add(v.data(), g.cout, g.oh, g.ow, g.k, stride, pad, g.h, g.w, out.data.data());
    add_bias_rows(out.data.data(), bias.data.data(), g.cout, static_cast<std::size_t>(g.oh) * g.ow);
    return out;
}

void deconv2d_backward(const Tensor& in, const Tensor& kernel, const Tensor& grad_out,
                       int stride, int pad,
                       std::vector<double>* grad_in, std::vector<double>* grad_kernel,
                       std::vector<double>* grad_bias) {
    ConvGeom g = deconv2d_geometry(in.dims, kernel.dims, {kernel.dims[1]}, stride, pad);
    if (grad_out.dims != std::vector<int>{g.cout, g.oh, g.ow})
        throw std::invalid_argument("deconv2d grad_out shape " + grad_out.shape_str() +
                                    " does not match output " + shape_str({g.cout, g.oh, g.ow}));
    const int kd = g.cout * g.k * g.k;
    const std::size_t n = static_cast<std::size_t>(g.h) * g.w;

    if (grad_bias) {
        const std::size_t on = static_cast<std::size_t>(g.oh) * g.ow;
#pragma omp parallel for schedule(static)
        for (int co = 0; co < g.cout; ++co) {
            const double* grow = grad_out.data.data() + static_cast<std::size_t>(co) * on;
            double acc = 0.0;
            for (std::size_t j = 0; j < on; ++j) acc += grow[j];
            (*grad_bias)[co] += acc;
        }
    }
    if (grad_kernel || grad_in) {
        std::vector<double> gcols(static_cast<std::size_t>(kd) * n);
        im2col(grad_out.data.data(), g.cout, g.oh, g.ow, g.k, stride, pad, g.h, g.w, gcols.data());
        if (grad_in) gemm_a_b(g.cin, kd, n, kernel.data.data(), gcols.data(), grad_in->data(), true);
        if (grad_kernel) gemm_a_bt_add(g.cin, kd, n, in.data.data(), gcols.data(), grad_kernel->data());
    }
}

}  // namespace kernels
}  // namespace gsmforge
