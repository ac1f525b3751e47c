#include "gsmforge/diagnostics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "gsmforge/attack.hpp"
#include "gsmforge/metrics.hpp"

namespace gsmforge {

double lcs(const Tensor& delta, const Tensor& x_p, const Tensor& x_q, double epsilon) {
    Tensor lazy = lazy_perturbation(x_p, x_q, epsilon);
    if (!delta.same_shape(lazy))
        throw std::invalid_argument("lcs shape mismatch: delta " + delta.shape_str() +
                                    " vs pair " + x_p.shape_str());
    double dot = 0.0, nd = 0.0, nl = 0.0;
    for (std::size_t i = 0; i < delta.data.size(); ++i) {
        dot += delta.data[i] * lazy.data[i];
        nd += delta.data[i] * delta.data[i];
        nl += lazy.data[i] * lazy.data[i];
    }
    nd = std::sqrt(nd);
    nl = std::sqrt(nl);
    if (nd < 1e-12 || nl < 1e-12) return std::numeric_limits<double>::quiet_NaN();
    return dot / (nd * nl);
}

double residual_norm(const CodecModel& model, const Tensor& x) {
    Tensor out = forward_raw(model, x, QuantMode::Hard);
    for (double& v : out.data) v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return l2dist(out, x);
}

RegionLabel classify_region(double eta, double eta0) {
    if (eta < 0.0 || eta0 < 0.0) throw std::invalid_argument("residuals must be >= 0");
    return eta <= eta0 ? RegionLabel::Identity : RegionLabel::Amplification;
}

Lemma1Report check_lemma1(const CodecModel& model, const GsmPair& pair, const Image& adversarial,
                          double success_threshold_psnr, double eta0) {
    Lemma1Report rep;
    rep.threshold_psnr = success_threshold_psnr;
    rep.eta0 = eta0;
    Image recon = forward_image(model, adversarial, QuantMode::Hard);
    rep.target_psnr = psnr(recon, pair.target);
    rep.eta = residual_norm(model, adversarial.t);
    rep.label = classify_region(rep.eta, eta0);
    rep.applicable = rep.target_psnr >= success_threshold_psnr;
    rep.violated = rep.applicable && rep.label == RegionLabel::Identity;
    return rep;
}

std::vector<double> smooth_series(const std::vector<double>& values, int window) {
    if (window < 1) throw std::invalid_argument("smoothing window must be >= 1");
    const int n = static_cast<int>(values.size());
    const int half = window / 2;
    std::vector<double> out(values.size(), std::numeric_limits<double>::quiet_NaN());
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        int cnt = 0;
        for (int j = std::max(0, i - half); j <= std::min(n - 1, i + half); ++j) {
            if (std::isnan(values[j])) continue;
            acc += values[j];
            ++cnt;
        }
        if (cnt > 0) out[i] = acc / cnt;
    }
    return out;
}

StageSegmentation segment_stages(const std::vector<TrajectoryRecord>& trajectory,
                                 const StageParams& params) {
    if (trajectory.empty()) throw std::invalid_argument("segment_stages: empty trajectory");
    std::vector<double> raw(trajectory.size());
    bool any_defined = false;
    for (std::size_t i = 0; i < trajectory.size(); ++i) {
        raw[i] = trajectory[i].lcs;
        any_defined = any_defined || !std::isnan(raw[i]);
    }
    if (!any_defined) throw std::invalid_argument("segment_stages: all LCS values undefined");

    std::vector<double> sm = smooth_series(raw, params.window);
    const int n = static_cast<int>(sm.size());

    StageSegmentation seg;
    seg.acme_value = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        if (!std::isnan(sm[i]) && sm[i] > seg.acme_value) {
            seg.acme_value = sm[i];
            seg.acme_t = i;
        }
    }
    seg.lazying_end = seg.acme_t;

    for (int i = n - 1; i >= 0; --i) {
        if (!std::isnan(sm[i])) {
            seg.final_smoothed = sm[i];
            break;
        }
    }

    // The fractions only make sense against a positive acme; a trajectory
    // that never rises above zero never leaves the oscillating stage.
    seg.oscillating_end = n;
    if (seg.acme_value > 0.0) {
        for (int i = seg.lazying_end + 1; i < n; ++i) {
            if (!std::isnan(sm[i]) && sm[i] < params.oscillating_fraction * seg.acme_value) {
                seg.oscillating_end = i;
                break;
            }
        }
        seg.refining_detected = seg.oscillating_end < n &&
                                seg.final_smoothed < params.refining_fraction * seg.acme_value;
    }
    return seg;
}

void write_trajectory_csv(const std::string& path,
                          const std::vector<TrajectoryRecord>& trajectory) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    std::fputs("t,alpha,objective,lcs,residual_norm,delta_linf\n", f);
    for (const TrajectoryRecord& r : trajectory)
        std::fprintf(f, "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.t, r.alpha_t, r.objective, r.lcs,
                     r.residual_norm, r.delta_linf);
    std::fclose(f);
}

}  // namespace gsmforge
