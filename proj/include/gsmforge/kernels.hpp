#pragma once

#include "gsmforge/tensor.hpp"

namespace gsmforge {

/// Validated geometry of a conv2d / deconv2d application.
struct ConvGeom {
    int cin = 0, h = 0, w = 0;
    int cout = 0, k = 0;
    int stride = 1, pad = 0;
    int oh = 0, ow = 0;
};

/// Checks shapes for conv2d(input[Cin,H,W], kernel[Cout,Cin,k,k], bias[Cout]).
/// The output size (H + 2*pad - k)/stride + 1 must be exact; otherwise throws.
ConvGeom conv2d_geometry(const std::vector<int>& in_dims, const std::vector<int>& kernel_dims,
                         const std::vector<int>& bias_dims, int stride, int pad);

/// Checks shapes for deconv2d(input[Cin,H,W], kernel[Cin,Cout,k,k], bias[Cout]).
/// Output spatial size is (H-1)*stride - 2*pad + k.
ConvGeom deconv2d_geometry(const std::vector<int>& in_dims, const std::vector<int>& kernel_dims,
                           const std::vector<int>& bias_dims, int stride, int pad);

// Production kernels: im2col + blocked GEMM, OpenMP-parallel over
// independent output rows. Every output element is written by exactly one
// thread with a fixed accumulation order, so results are bit-identical
// regardless of thread count.
namespace kernels {

Tensor conv2d_forward(const Tensor& in, const Tensor& kernel, const Tensor& bias,
                      int stride, int pad);

/// Accumulates (+=) into any non-null gradient output.
void conv2d_backward(const Tensor& in, const Tensor& kernel, const Tensor& grad_out,
                     int stride, int pad,
                     std::vector<double>* grad_in, std::vector<double>* grad_kernel,
                     std::vector<double>* grad_bias);

Tensor deconv2d_forward(const Tensor& in, const Tensor& kernel, const Tensor& bias,
                        int stride, int pad);

void deconv2d_backward(const Tensor& in, const Tensor& kernel, const Tensor& grad_out,
                       int stride, int pad,
                       std::vector<double>* grad_in, std::vector<double>* grad_kernel,
                       std::vector<double>* grad_bias);

}  // namespace kernels

// Serial reference implementations: direct quadruple loops, no layout
// tricks. These are the oracles the production kernels are tested against
// and the baseline the benchmark tool compares with.
namespace ref {

Tensor conv2d_forward(const Tensor& in, const Tensor& kernel, const Tensor& bias,
                      int stride, int pad);

void conv2d_backward(const Tensor& in, const Tensor& kernel, const Tensor& grad_out,
                     int stride, int pad,
                     std::vector<double>* grad_in, std::vector<double>* grad_kernel,
                     std::vector<double>* grad_bias);

Tensor deconv2d_forward(const Tensor& in, const Tensor& kernel, const Tensor& bias,
                        int stride, int pad);

void deconv2d_backward(const Tensor& in, const Tensor& kernel, const Tensor& grad_out,
                       int stride, int pad,
                       std::vector<double>* grad_in, std::vector<double>* grad_kernel,
                       std::vector<double>* grad_bias);

}  // namespace ref

}  // namespace gsmforge
