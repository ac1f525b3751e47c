#include "gsmforge/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace gsmforge {

double gradient_check(const ScalarFn& f, const Tensor& at, double step) {
    if (step <= 0.0) throw std::invalid_argument("gradient_check step must be > 0");
    Tensor analytic;
    double v0 = f(at, &analytic);
    if (!std::isfinite(v0)) throw std::runtime_error("gradient_check: f(at) is non-finite");
    if (analytic.data.size() != at.data.size())
        throw std::runtime_error("gradient_check: analytic gradient size mismatch");

    Tensor x = at;
    double worst = 0.0;
    for (std::size_t i = 0; i < at.data.size(); ++i) {
        x.data[i] = at.data[i] + step;
        double vp = f(x, nullptr);
        x.data[i] = at.data[i] - step;
        double vm = f(x, nullptr);
        x.data[i] = at.data[i];
        if (!std::isfinite(vp) || !std::isfinite(vm))
            throw std::runtime_error("gradient_check: probe value is non-finite");
        double numeric = (vp - vm) / (2.0 * step);
        double a = analytic.data[i];
        double rel = std::fabs(a - numeric) / std::max(1e-8, std::fabs(a) + std::fabs(numeric));
        if (rel > worst) worst = rel;
    }
    return worst;
}

}  // namespace gsmforge
