#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gsmforge/codec.hpp"
#include "gsmforge/image.hpp"

namespace gsmforge {

enum class Schedule { Fixed, PeriodicGeometric };

struct AttackConfig {
    double epsilon = 0.08;      // l-inf budget in [0,1] pixel units
    int steps = 500;            // T
    double alpha0 = 0.01;       // initial step size
    double decay_factor = 0.5;  // k, multiplies every period
    int period = 100;           // P
    std::uint64_t seed = 0;
    Schedule schedule = Schedule::PeriodicGeometric;

    /// Throws on out-of-range fields. A periodic schedule with P > T
    /// degenerates to fixed; that is permitted but logged to stderr.
    void validate() const;
};

struct GsmPair {
    Image source;  // x_p
    Image target;  // x_q
    void validate() const;
};

struct TrajectoryRecord {
    int t = 0;
    double alpha_t = 0.0;
    double objective = 0.0;      // phi at delta^t
    double lcs = 0.0;            // NaN when undefined
    double residual_norm = 0.0;  // eta of x_p + delta^t under hard rounding
    double delta_linf = 0.0;
};

struct AttackResult {
    Image adversarial;  // clamp_[0,1](x_p + delta^T)
    Tensor final_delta;
    std::vector<TrajectoryRecord> trajectory;
    double final_objective = 0.0;
    // Diagnostic only; delta^T above is the primary return.
    Tensor best_delta;
    double best_objective = 0.0;
    bool aborted = false;  // non-finite objective; best-so-far returned
};

/// phi = -1/2 ||f(x_p + delta) - x_q||_2^2 through the straight-through
/// quantizer. When grad_out is non-null it receives d(phi)/d(delta).
double gsm_objective(const CodecModel& model, const Tensor& x_p, const Tensor& delta,
                     const Tensor& x_q, Tensor* grad_out = nullptr);

/// alpha^(t): alpha0 * k^floor(t/P) for the periodic schedule, alpha0 for
/// fixed. Exact repeated multiplication, no pow().
double schedule_step_size(const AttackConfig& cfg, int t);

/// Elementwise clamp of (x_q - x_p) to [-epsilon, epsilon].
Tensor lazy_perturbation(const Tensor& x_p, const Tensor& x_q, double epsilon);

/// delta' = clamp(delta + alpha_t * sgn(grad), -epsilon, epsilon), sgn(0)=0.
Tensor pgd_step(const Tensor& delta, const Tensor& grad, double alpha_t, double epsilon);

/// Hook for composing extra differentiable stages (e.g. a preprocessing
/// defense) in front of the codec inside the attack loop.
using ForwardBuilder =
    std::function<Graph::NodeId(Graph&, const CodecNodes&, Graph::NodeId x_adv)>;

/// PGD over the GSM objective with the configured step-size schedule.
/// Deterministic given (cfg.seed, pair_index); the uniform init draws from
/// a stream derived from both.
AttackResult run_attack(const CodecModel& model, const GsmPair& pair, const AttackConfig& cfg,
                        std::uint64_t pair_index = 0,
                        const ForwardBuilder* custom_forward = nullptr);

}  // namespace gsmforge
