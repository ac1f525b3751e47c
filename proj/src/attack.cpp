#include "gsmforge/attack.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "gsmforge/diagnostics.hpp"
#include "gsmforge/metrics.hpp"
#include "gsmforge/rng.hpp"

namespace gsmforge {

void AttackConfig::validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0))
        throw std::invalid_argument("epsilon must be in [0,1], got " + std::to_string(epsilon));
    if (steps < 0) throw std::invalid_argument("steps must be >= 0");
    if (!(alpha0 > 0.0)) throw std::invalid_argument("alpha0 must be > 0");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0))
        throw std::invalid_argument("decay_factor must be in (0,1], got " +
                                    std::to_string(decay_factor));
    if (period < 1) throw std::invalid_argument("period must be >= 1");
    if (schedule == Schedule::PeriodicGeometric && period > steps && steps > 0)
        std::fprintf(stderr,
                     "note: period %d > steps %d, periodic schedule degenerates to fixed\n",
                     period, steps);
}

void GsmPair::validate() const {
    source.validate();
    target.validate();
    if (!source.t.same_shape(target.t))
        throw std::invalid_argument("pair shape mismatch: source " + source.t.shape_str() +
                                    " vs target " + target.t.shape_str());
}

double gsm_objective(const CodecModel& model, const Tensor& x_p, const Tensor& delta,
                     const Tensor& x_q, Tensor* grad_out) {
    if (!x_p.same_shape(delta) || !x_p.same_shape(x_q))
        throw std::invalid_argument("gsm_objective shape mismatch: x_p " + x_p.shape_str() +
                                    ", delta " + delta.shape_str() + ", x_q " + x_q.shape_str());
    Graph g;
    CodecNodes p = mount_params(g, model, false);
    Graph::NodeId dn = g.leaf(delta, grad_out != nullptr);
    Graph::NodeId xadv = g.add(g.leaf(x_p, false), dn);
    Graph::NodeId fx = build_forward(g, p, xadv, QuantMode::Ste, nullptr);
    Graph::NodeId phi = g.scale(g.sum_sq(g.sub(fx, g.leaf(x_q, false))), -0.5);
    double value = g.value(phi).data[0];
    if (grad_out) {
        g.backward(phi);
        grad_out->dims = delta.dims;
        grad_out->data = g.grad(dn);
        grad_out->grad.clear();
    }
    return value;
}

double schedule_step_size(const AttackConfig& cfg, int t) {
    if (t < 0 || (cfg.steps > 0 && t >= cfg.steps))
        throw std::invalid_argument("schedule step " + std::to_string(t) + " outside [0," +
                                    std::to_string(cfg.steps) + ")");
    if (cfg.schedule == Schedule::Fixed) return cfg.alpha0;
    int n = t / cfg.period;
    double factor = 1.0;
    for (int i = 0; i < n; ++i) factor *= cfg.decay_factor;
    return cfg.alpha0 * factor;
}

Tensor lazy_perturbation(const Tensor& x_p, const Tensor& x_q, double epsilon) {
    if (!x_p.same_shape(x_q))
        throw std::invalid_argument("lazy_perturbation shape mismatch: " + x_p.shape_str() +
                                    " vs " + x_q.shape_str());
    Tensor out = x_q;
    out.grad.clear();
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        double d = x_q.data[i] - x_p.data[i];
        if (d > epsilon) d = epsilon;
        if (d < -epsilon) d = -epsilon;
        out.data[i] = d;
    }
    return out;
}

Tensor pgd_step(const Tensor& delta, const Tensor& grad, double alpha_t, double epsilon) {
    if (!delta.same_shape(grad))
        throw std::invalid_argument("pgd_step shape mismatch: delta " + delta.shape_str() +
                                    " vs grad " + grad.shape_str());
    if (!(alpha_t > 0.0)) throw std::invalid_argument("pgd_step alpha must be > 0");
    Tensor out = delta;
    out.grad.clear();
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        double s = grad.data[i] > 0.0 ? 1.0 : (grad.data[i] < 0.0 ? -1.0 : 0.0);
        double v = delta.data[i] + alpha_t * s;
        if (v > epsilon) v = epsilon;
        if (v < -epsilon) v = -epsilon;
        out.data[i] = v;
    }
    return out;
}

namespace {

// One forward of the attack surrogate. Returns phi and, when wanted, the
// gradient of phi w.r.t. delta plus the surrogate's reconstruction (whose
// values equal the deployed hard-rounded forward).
struct StepEval {
    double phi = 0.0;
    std::vector<double> grad;
    Tensor reconstruction;
};

StepEval eval_step(const CodecModel& model, const Tensor& x_p, const Tensor& delta,
                   const Tensor& x_q, bool want_grad, const ForwardBuilder* custom_forward) {
    Graph g;
    CodecNodes p = mount_params(g, model, false);
    Graph::NodeId dn = g.leaf(delta, want_grad);
    Graph::NodeId xadv = g.add(g.leaf(x_p, false), dn);
    Graph::NodeId fx = custom_forward ? (*custom_forward)(g, p, xadv)
                                      : build_forward(g, p, xadv, QuantMode::Ste, nullptr);
    Graph::NodeId phi = g.scale(g.sum_sq(g.sub(fx, g.leaf(x_q, false))), -0.5);
    StepEval out;
    out.phi = g.value(phi).data[0];
    out.reconstruction = g.value(fx);
    if (want_grad) {
        g.backward(phi);
        out.grad = g.grad(dn);
    }
    return out;
}

}  // namespace

AttackResult run_attack(const CodecModel& model, const GsmPair& pair, const AttackConfig& cfg,
                        std::uint64_t pair_index, const ForwardBuilder* custom_forward) {
    cfg.validate();
    pair.validate();
    model.validate();

    const Tensor& x_p = pair.source.t;
    const Tensor& x_q = pair.target.t;

    Rng rng(Rng::derive(cfg.seed, pair_index));
    Tensor delta(x_p.dims);
    for (double& v : delta.data) v = rng.uniform_symmetric(cfg.epsilon);

    AttackResult res;
    res.best_objective = -std::numeric_limits<double>::infinity();
    res.trajectory.reserve(static_cast<std::size_t>(cfg.steps));

    for (int t = 0; t < cfg.steps; ++t) {
        double alpha_t = schedule_step_size(cfg, t);
        StepEval ev;
        try {
            ev = eval_step(model, x_p, delta, x_q, true, custom_forward);
        } catch (const std::runtime_error&) {
            res.aborted = true;
            break;
        }
        TrajectoryRecord rec;
        rec.t = t;
        rec.alpha_t = alpha_t;
        rec.objective = ev.phi;
        rec.lcs = lcs(delta, x_p, x_q, cfg.epsilon);
        {
            Tensor adv = x_p;
            for (std::size_t i = 0; i < adv.data.size(); ++i) adv.data[i] += delta.data[i];
            Tensor deployed = ev.reconstruction;
            for (double& v : deployed.data) v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
            rec.residual_norm = l2dist(deployed, adv);
        }
        rec.delta_linf = 0.0;
        for (double v : delta.data) rec.delta_linf = std::max(rec.delta_linf, std::fabs(v));
        res.trajectory.push_back(rec);

        if (ev.phi > res.best_objective) {
            res.best_objective = ev.phi;
            res.best_delta = delta;
        }

        Tensor grad;
        grad.dims = delta.dims;
        grad.data = std::move(ev.grad);
        delta = pgd_step(delta, grad, alpha_t, cfg.epsilon);
    }

    if (res.aborted) {
        if (res.best_delta.numel() == 0) res.best_delta = delta;
        res.final_delta = res.best_delta;
        res.final_objective = res.best_objective;
    } else {
        res.final_delta = delta;
        try {
            StepEval ev = eval_step(model, x_p, delta, x_q, false, custom_forward);
            res.final_objective = ev.phi;
        } catch (const std::runtime_error&) {
            res.aborted = true;
            res.final_objective = -std::numeric_limits<double>::infinity();
        }
        if (res.final_objective > res.best_objective) {
            res.best_objective = res.final_objective;
            res.best_delta = delta;
        }
    }

    Tensor adv = x_p;
    for (std::size_t i = 0; i < adv.data.size(); ++i) adv.data[i] += res.final_delta.data[i];
    res.adversarial = clamp_to_image(adv);
    return res;
}

}  // namespace gsmforge
