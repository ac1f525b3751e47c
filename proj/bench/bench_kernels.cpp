// Compares the OpenMP im2col/GEMM kernels against the serial reference at
// the codec's layer shapes, checking agreement and reporting speedups.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "gsmforge/kernels.hpp"
#include "gsmforge/rng.hpp"

using namespace gsmforge;

namespace {

Tensor random_tensor(std::vector<int> dims, Rng& rng) {
    Tensor t(std::move(dims));
    for (double& v : t.data) v = rng.uniform_symmetric(1.0);
    return t;
}

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

struct Case {
    const char* name;
    int cin, h, w, cout;
    bool transposed;
};

}  // namespace

int main() {
    Rng rng(20240811);
    // the four codec layers at 64x64 input
    const Case cases[] = {
        {"conv 3->64 64x64", 3, 64, 64, 64, false},
        {"conv 64->8 32x32", 64, 32, 32, 8, false},
        {"deconv 8->64 16x16", 8, 16, 16, 64, true},
        {"deconv 64->3 32x32", 64, 32, 32, 3, true},
    };
    const int k = 4, stride = 2, pad = 1, reps = 50;

    std::printf("%-22s %12s %12s %9s %12s\n", "layer", "serial (ms)", "omp (ms)", "speedup",
                "max |diff|");
    for (const Case& c : cases) {
        Tensor in = random_tensor({c.cin, c.h, c.w}, rng);
        Tensor w = c.transposed ? random_tensor({c.cin, c.cout, k, k}, rng)
                                : random_tensor({c.cout, c.cin, k, k}, rng);
        Tensor b = random_tensor({c.cout}, rng);

        Tensor out_ref, out_omp;
        double t_ref, t_omp;
        if (!c.transposed) {
            t_ref = time_ms([&] { out_ref = ref::conv2d_forward(in, w, b, stride, pad); }, reps);
            t_omp = time_ms([&] { out_omp = kernels::conv2d_forward(in, w, b, stride, pad); }, reps);
        } else {
            t_ref = time_ms([&] { out_ref = ref::deconv2d_forward(in, w, b, stride, pad); }, reps);
            t_omp = time_ms([&] { out_omp = kernels::deconv2d_forward(in, w, b, stride, pad); }, reps);
        }
        double diff = max_abs_diff(out_ref, out_omp);
        std::printf("%-22s %12.3f %12.3f %8.2fx %12.3g\n", c.name, t_ref, t_omp, t_ref / t_omp,
                    diff);
        if (diff > 1e-10) {
            std::printf("MISMATCH above 1e-10, kernels disagree\n");
            return 1;
        }

        // backward (input + kernel + bias grads)
        Tensor gout(out_ref.dims);
        for (double& v : gout.data) v = rng.uniform_symmetric(1.0);
        std::vector<double> gi_ref(in.numel(), 0.0), gw_ref(w.numel(), 0.0), gb_ref(b.numel(), 0.0);
        std::vector<double> gi_omp(in.numel(), 0.0), gw_omp(w.numel(), 0.0), gb_omp(b.numel(), 0.0);
        auto zero = [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); };
        if (!c.transposed) {
            t_ref = time_ms(
                [&] {
                    zero(gi_ref), zero(gw_ref), zero(gb_ref);
                    ref::conv2d_backward(in, w, gout, stride, pad, &gi_ref, &gw_ref, &gb_ref);
                },
                reps);
            t_omp = time_ms(
                [&] {
                    zero(gi_omp), zero(gw_omp), zero(gb_omp);
                    kernels::conv2d_backward(in, w, gout, stride, pad, &gi_omp, &gw_omp, &gb_omp);
                },
                reps);
        } else {
            t_ref = time_ms(
                [&] {
                    zero(gi_ref), zero(gw_ref), zero(gb_ref);
                    ref::deconv2d_backward(in, w, gout, stride, pad, &gi_ref, &gw_ref, &gb_ref);
                },
                reps);
            t_omp = time_ms(
                [&] {
                    zero(gi_omp), zero(gw_omp), zero(gb_omp);
                    kernels::deconv2d_backward(in, w, gout, stride, pad, &gi_omp, &gw_omp, &gb_omp);
                },
                reps);
        }
        double bdiff = 0.0;
        for (std::size_t i = 0; i < gi_ref.size(); ++i)
            bdiff = std::max(bdiff, std::fabs(gi_ref[i] - gi_omp[i]));
        for (std::size_t i = 0; i < gw_ref.size(); ++i)
            bdiff = std::max(bdiff, std::fabs(gw_ref[i] - gw_omp[i]));
        for (std::size_t i = 0; i < gb_ref.size(); ++i)
            bdiff = std::max(bdiff, std::fabs(gb_ref[i] - gb_omp[i]));
        std::printf("%-22s %12.3f %12.3f %8.2fx %12.3g\n", "  backward", t_ref, t_omp,
                    t_ref / t_omp, bdiff);
        if (bdiff > 1e-10) {
            std::printf("MISMATCH above 1e-10, kernels disagree\n");
            return 1;
        }
    }
    return 0;
}
