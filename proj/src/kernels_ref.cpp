#include "gsmforge/kernels.hpp"

#include <stdexcept>

// Naive direct-loop implementations, kept deliberately close to the
// textbook definitions. No layout transforms, no parallelism.

namespace gsmforge {
namespace ref {

namespace {

inline std::size_t idx3(int c, int y, int x, int h, int w) {
    return (static_cast<std::size_t>(c) * h + y) * w + x;
}

}  // namespace

Tensor conv2d_forward(const Tensor& in, const Tensor& kernel, const Tensor& bias,
                      int stride, int pad) {
    ConvGeom g = conv2d_geometry(in.dims, kernel.dims, bias.dims, stride, pad);
    Tensor out({g.cout, g.oh, g.ow});
    for (int co = 0; co < g.cout; ++co)
        for (int oy = 0; oy < g.oh; ++oy)
            for (int ox = 0; ox < g.ow; ++ox) {
                double acc = bias.data[co];
                for (int ci = 0; ci < g.cin; ++ci)
                    for (int ky = 0; ky < g.k; ++ky)
                        for (int kx = 0; kx < g.k; ++kx) {
                            int iy = oy * stride - pad + ky;
                            int ix = ox * stride - pad + kx;
                            if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) continue;
                            acc += in.data[idx3(ci, iy, ix, g.h, g.w)] *
                                   kernel.data[((static_cast<std::size_t>(co) * g.cin + ci) * g.k + ky) * g.k + kx];
                        }
                out.data[idx3(co, oy, ox, g.oh, g.ow)] = acc;
            }
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
    for (int co = 0; co < g.cout; ++co)
        for (int oy = 0; oy < g.oh; ++oy)
            for (int ox = 0; ox < g.ow; ++ox) {
                double gv = grad_out.data[idx3(co, oy, ox, g.oh, g.ow)];
                if (grad_bias) (*grad_bias)[co] += gv;
                for (int ci = 0; ci < g.cin; ++ci)
                    for (int ky = 0; ky < g.k; ++ky)
                        for (int kx = 0; kx < g.k; ++kx) {
                            int iy = oy * stride - pad + ky;
                            int ix = ox * stride - pad + kx;
                            if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) continue;
                            std::size_t wi =
                                ((static_cast<std::size_t>(co) * g.cin + ci) * g.k + ky) * g.k + kx;
                            if (grad_in) (*grad_in)[idx3(ci, iy, ix, g.h, g.w)] += gv * kernel.data[wi];
                            if (grad_kernel) (*grad_kernel)[wi] += gv * in.data[idx3(ci, iy, ix, g.h, g.w)];
                        }
            }
}

Tensor deconv2d_forward(const Tensor& in, const Tensor& kernel, const Tensor& bias,
                        int stride, int pad) {
    ConvGeom g = deconv2d_geometry(in.dims, kernel.dims, bias.dims, stride, pad);
    Tensor out({g.cout, g.oh, g.ow});
    for (int co = 0; co < g.cout; ++co)
        for (int oy = 0; oy < g.oh; ++oy)
            for (int ox = 0; ox < g.ow; ++ox)
                out.data[idx3(co, oy, ox, g.oh, g.ow)] = bias.data[co];
    for (int ci = 0; ci < g.cin; ++ci)
        for (int iy = 0; iy < g.h; ++iy)
            for (int ix = 0; ix < g.w; ++ix) {
                double v = in.data[idx3(ci, iy, ix, g.h, g.w)];
                for (int co = 0; co < g.cout; ++co)
                    for (int ky = 0; ky < g.k; ++ky)
                        for (int kx = 0; kx < g.k; ++kx) {
                            int oy = iy * stride - pad + ky;
                            int ox = ix * stride - pad + kx;
                            if (oy < 0 || oy >= g.oh || ox < 0 || ox >= g.ow) continue;
                            out.data[idx3(co, oy, ox, g.oh, g.ow)] +=
                                v * kernel.data[((static_cast<std::size_t>(ci) * g.cout + co) * g.k + ky) * g.k + kx];
                        }
            }
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
    if (grad_bias)
        for (int co = 0; co < g.cout; ++co)
            for (int oy = 0; oy < g.oh; ++oy)
                for (int ox = 0; ox < g.ow; ++ox)
                    (*grad_bias)[co] += grad_out.data[idx3(co, oy, ox, g.oh, g.ow)];
    for (int ci = 0; ci < g.cin; ++ci)
        for (int iy = 0; iy < g.h; ++iy)
            for (int ix = 0; ix < g.w; ++ix)
                for (int co = 0; co < g.cout; ++co)
                    for (int ky = 0; ky < g.k; ++ky)
                        for (int kx = 0; kx < g.k; ++kx) {
                            int oy = iy * stride - pad + ky;
                            int ox = ix * stride - pad + kx;
                            if (oy < 0 || oy >= g.oh || ox < 0 || ox >= g.ow) continue;
                            std::size_t wi =
                                ((static_cast<std::size_t>(ci) * g.cout + co) * g.k + ky) * g.k + kx;
                            double gv = grad_out.data[idx3(co, oy, ox, g.oh, g.ow)];
                            if (grad_in) (*grad_in)[idx3(ci, iy, ix, g.h, g.w)] += gv * kernel.data[wi];
                            if (grad_kernel) (*grad_kernel)[wi] += gv * in.data[idx3(ci, iy, ix, g.h, g.w)];
                        }
}

}  // namespace ref
}  // namespace gsmforge
