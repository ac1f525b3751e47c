#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "gsmforge/rng.hpp"
#include "gsmforge/tensor.hpp"

namespace gsmforge {

/// Reverse-mode tape. Operations evaluate eagerly and record a backward
/// closure; backward() replays the tape in reverse, accumulating gradients
/// additively into every node that requires them. A graph is built fresh
/// for each optimization step and backward() runs at most once per build.
class Graph {
public:
    using NodeId = int;
    using BackwardFn = std::function<void(Graph&, NodeId)>;

    NodeId leaf(Tensor value, bool requires_grad);

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId affine(NodeId a, double mul, double shift);
    NodeId conv2d(NodeId in, NodeId kernel, NodeId bias, int stride, int pad);
    NodeId deconv2d(NodeId in, NodeId kernel, NodeId bias, int stride, int pad);
    NodeId leaky_relu(NodeId in, double slope);

    /// round(x) forward, identity backward (straight-through estimator).
    NodeId round_ste(NodeId in);
    /// y + u with u ~ Uniform(-0.5, 0.5) drawn eagerly; identity backward.
    NodeId add_uniform_noise(NodeId in, Rng& rng);
    /// Plain rounding; rejected when the input tracks gradients.
    NodeId round_hard(NodeId in);

    NodeId sum(NodeId a);
    NodeId sum_sq(NodeId a);
    NodeId mse(NodeId a, NodeId b);

    /// Total code length in bits of latent y under a per-channel logistic
    /// density with location mu[c] and scale exp(log_scale[c]):
    ///   sum_i -log2( max(F(y_i + 0.5) - F(y_i - 0.5), prob_floor) ).
    NodeId bits_logistic(NodeId y, NodeId mu, NodeId log_scale, double prob_floor);

    /// Clamp to [0,1]; backward passes through inside the range.
    NodeId clamp01(NodeId a);

    /// Escape hatch for module-specific ops (value computed by the caller).
    NodeId custom(Tensor value, std::vector<NodeId> deps, BackwardFn back, bool check = true);

    const Tensor& value(NodeId id) const { return nodes_[id]->value; }
    bool requires_grad(NodeId id) const { return nodes_[id]->needs_grad; }
    const std::vector<double>& grad(NodeId id) const;
    std::vector<double>& grad_mut(NodeId id);

    void backward(NodeId scalar_out);

    int size() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        Tensor value;
        std::vector<double> grad;
        bool needs_grad = false;
        BackwardFn back;
    };

    NodeId push(Tensor value, bool needs_grad, BackwardFn back, const char* what, bool check = true);
    Node& node(NodeId id) { return *nodes_[id]; }

    std::vector<std::unique_ptr<Node>> nodes_;
    bool ran_backward_ = false;
};

}  // namespace gsmforge
