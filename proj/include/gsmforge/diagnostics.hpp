#pragma once

#include <string>
#include <vector>

#include "gsmforge/codec.hpp"
#include "gsmforge/image.hpp"

namespace gsmforge {

struct TrajectoryRecord;
struct GsmPair;

/// Cosine similarity between delta and the lazy perturbation
/// clamp(x_q - x_p, -eps, eps). Returns NaN (the undefined sentinel) when
/// either norm is below 1e-12; x_p == x_q is not an error.
double lcs(const Tensor& delta, const Tensor& x_p, const Tensor& x_q, double epsilon);

/// eta = || clamp_[0,1](f(x)) - x ||_2 with hard rounding: the residual of
/// the deployed codec, not of the attack surrogate.
double residual_norm(const CodecModel& model, const Tensor& x);

enum class RegionLabel { Identity, Amplification };

/// Identity iff eta <= eta0 (boundary inclusive).
RegionLabel classify_region(double eta, double eta0);

struct Lemma1Report {
    double target_psnr = 0.0;
    double threshold_psnr = 0.0;
    double eta = 0.0;
    double eta0 = 0.0;
    RegionLabel label = RegionLabel::Identity;
    bool applicable = false;  // attack succeeded, so the lemma binds
    bool violated = false;    // successful yet labeled Identity
};

/// Contrapositive check of the amplification-region lemma: a reconstruction
/// close to the target cannot come from an identity-region input. A
/// violated verdict is a reportable finding, not an exception.
Lemma1Report check_lemma1(const CodecModel& model, const GsmPair& pair, const Image& adversarial,
                          double success_threshold_psnr, double eta0);

struct StageParams {
    int window = 5;                    // centered moving-average width
    double oscillating_fraction = 0.6; // leave-oscillation threshold vs acme
    double refining_fraction = 0.5;    // final-LCS threshold vs acme
};

struct StageSegmentation {
    int lazying_end = 0;      // argmax of smoothed LCS (earliest tie)
    int oscillating_end = 0;  // first later index below frac*acme, else T
    bool refining_detected = false;
    int acme_t = 0;
    double acme_value = 0.0;
    double final_smoothed = 0.0;
};

/// Centered moving average that skips undefined (NaN) entries.
std::vector<double> smooth_series(const std::vector<double>& values, int window);

StageSegmentation segment_stages(const std::vector<TrajectoryRecord>& trajectory,
                                 const StageParams& params = {});

/// Header t,alpha,objective,lcs,residual_norm,delta_linf; one row per step;
/// 17-significant-digit reals; LF line endings.
void write_trajectory_csv(const std::string& path,
                          const std::vector<TrajectoryRecord>& trajectory);

}  // namespace gsmforge
