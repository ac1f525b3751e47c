#pragma once

#include <functional>

#include "gsmforge/tensor.hpp"

namespace gsmforge {

/// A scalar-valued differentiable function of one tensor. When grad_out is
/// non-null the callee fills it with the analytic gradient (same shape as x).
using ScalarFn = std::function<double(const Tensor& x, Tensor* grad_out)>;

/// Compares the analytic gradient of f at `at` against central finite
/// differences with the given step. Returns the maximum over coordinates of
///   |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
/// Throws if any evaluation of f is non-finite or step <= 0.
double gradient_check(const ScalarFn& f, const Tensor& at, double step);

}  // namespace gsmforge
