#include "gsmforge/graph.hpp"

#include <cmath>
#include <stdexcept>

#include "gsmforge/kernels.hpp"

namespace gsmforge {

namespace {

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

Graph::NodeId Graph::push(Tensor value, bool needs_grad, BackwardFn back, const char* what,
                          bool check) {
    if (check) value.check_finite(what);
    auto n = std::make_unique<Node>();
    n->value = std::move(value);
    n->needs_grad = needs_grad;
    if (needs_grad) n->grad.assign(n->value.numel(), 0.0);
    n->back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

Graph::NodeId Graph::leaf(Tensor value, bool requires_grad) {
    return push(std::move(value), requires_grad, nullptr, "leaf");
}

const std::vector<double>& Graph::grad(NodeId id) const {
    if (!nodes_[id]->needs_grad) throw std::logic_error("node does not track gradients");
    return nodes_[id]->grad;
}

std::vector<double>& Graph::grad_mut(NodeId id) {
    if (!nodes_[id]->needs_grad) throw std::logic_error("node does not track gradients");
    return nodes_[id]->grad;
}

Graph::NodeId Graph::add(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb))
        throw std::invalid_argument("add shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
    bool req = requires_grad(a) || requires_grad(b);
    return push(std::move(out), req,
                [a, b](Graph& g, NodeId self) {
                    const auto& go = g.grad(self);
                    if (g.requires_grad(a)) {
                        auto& ga = g.grad_mut(a);
                        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
                    }
                    if (g.requires_grad(b)) {
                        auto& gb = g.grad_mut(b);
                        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
                    }
                },
                "add");
}

Graph::NodeId Graph::sub(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb))
        throw std::invalid_argument("sub shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= tb.data[i];
    bool req = requires_grad(a) || requires_grad(b);
    return push(std::move(out), req,
                [a, b](Graph& g, NodeId self) {
                    const auto& go = g.grad(self);
                    if (g.requires_grad(a)) {
                        auto& ga = g.grad_mut(a);
                        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
                    }
                    if (g.requires_grad(b)) {
                        auto& gb = g.grad_mut(b);
                        for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
                    }
                },
                "sub");
}

Graph::NodeId Graph::scale(NodeId a, double c) { return affine(a, c, 0.0); }

Graph::NodeId Graph::affine(NodeId a, double mul, double shift) {
    Tensor out = value(a);
    for (double& x : out.data) x = x * mul + shift;
    return push(std::move(out), requires_grad(a),
                [a, mul](Graph& g, NodeId self) {
                    if (!g.requires_grad(a)) return;
                    const auto& go = g.grad(self);
                    auto& ga = g.grad_mut(a);
                    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += mul * go[i];
                },
                "affine");
}

Graph::NodeId Graph::conv2d(NodeId in, NodeId kernel, NodeId bias, int stride, int pad) {
    Tensor out = kernels::conv2d_forward(value(in), value(kernel), value(bias), stride, pad);
    bool req = requires_grad(in) || requires_grad(kernel) || requires_grad(bias);
    return push(std::move(out), req,
                [in, kernel, bias, stride, pad](Graph& g, NodeId self) {
                    Tensor go;
                    go.dims = g.value(self).dims;
                    go.data = g.grad(self);
                    kernels::conv2d_backward(
                        g.value(in), g.value(kernel), go, stride, pad,
                        g.requires_grad(in) ? &g.grad_mut(in) : nullptr,
                        g.requires_grad(kernel) ? &g.grad_mut(kernel) : nullptr,
                        g.requires_grad(bias) ? &g.grad_mut(bias) : nullptr);
                },
                "conv2d");
}

Graph::NodeId Graph::deconv2d(NodeId in, NodeId kernel, NodeId bias, int stride, int pad) {
    Tensor out = kernels::deconv2d_forward(value(in), value(kernel), value(bias), stride, pad);
    bool req = requires_grad(in) || requires_grad(kernel) || requires_grad(bias);
    return push(std::move(out), req,
                [in, kernel, bias, stride, pad](Graph& g, NodeId self) {
                    Tensor go;
                    go.dims = g.value(self).dims;
                    go.data = g.grad(self);
                    kernels::deconv2d_backward(
                        g.value(in), g.value(kernel), go, stride, pad,
                        g.requires_grad(in) ? &g.grad_mut(in) : nullptr,
                        g.requires_grad(kernel) ? &g.grad_mut(kernel) : nullptr,
                        g.requires_grad(bias) ? &g.grad_mut(bias) : nullptr);
                },
                "deconv2d");
}

Graph::NodeId Graph::leaky_relu(NodeId in, double slope) {
    if (slope < 0.0 || slope >= 1.0)
        throw std::invalid_argument("leaky_relu slope must be in [0,1), got " + std::to_string(slope));
    Tensor out = value(in);
    for (double& x : out.data)
        if (x < 0.0) x *= slope;
    return push(std::move(out), requires_grad(in),
                [in, slope](Graph& g, NodeId self) {
                    if (!g.requires_grad(in)) return;
                    const auto& go = g.grad(self);
                    const auto& x = g.value(in).data;
                    auto& gi = g.grad_mut(in);
                    // subgradient at exactly 0 is the negative-side slope
                    for (std::size_t i = 0; i < go.size(); ++i)
                        gi[i] += (x[i] > 0.0 ? go[i] : slope * go[i]);
                },
                "leaky_relu");
}

Graph::NodeId Graph::round_ste(NodeId in) {
    Tensor out = value(in);
    for (double& x : out.data) x = std::round(x);
    return push(std::move(out), requires_grad(in),
                [in](Graph& g, NodeId self) {
                    if (!g.requires_grad(in)) return;
                    const auto& go = g.grad(self);
                    auto& gi = g.grad_mut(in);
                    for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
                },
                "round_ste");
}

Graph::NodeId Graph::add_uniform_noise(NodeId in, Rng& rng) {
    Tensor out = value(in);
    for (double& x : out.data) x += rng.uniform_open() - 0.5;
    return push(std::move(out), requires_grad(in),
                [in](Graph& g, NodeId self) {
                    if (!g.requires_grad(in)) return;
                    const auto& go = g.grad(self);
                    auto& gi = g.grad_mut(in);
                    for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
                },
                "add_uniform_noise");
}

Graph::NodeId Graph::round_hard(NodeId in) {
    if (requires_grad(in))
        throw std::invalid_argument("hard quantization inside a gradient-tracked computation");
    Tensor out = value(in);
    for (double& x : out.data) x = std::round(x);
    return push(std::move(out), false, nullptr, "round_hard");
}

Graph::NodeId Graph::sum(NodeId a) {
    double acc = 0.0;
    for (double x : value(a).data) acc += x;
    return push(Tensor::from({1}, {acc}), requires_grad(a),
                [a](Graph& g, NodeId self) {
                    if (!g.requires_grad(a)) return;
                    double go = g.grad(self)[0];
                    auto& ga = g.grad_mut(a);
                    for (double& x : ga) x += go;
                },
                "sum");
}

Graph::NodeId Graph::sum_sq(NodeId a) {
    double acc = 0.0;
    for (double x : value(a).data) acc += x * x;
    return push(Tensor::from({1}, {acc}), requires_grad(a),
                [a](Graph& g, NodeId self) {
                    if (!g.requires_grad(a)) return;
                    double go = g.grad(self)[0];
                    const auto& x = g.value(a).data;
                    auto& ga = g.grad_mut(a);
                    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += 2.0 * x[i] * go;
                },
                "sum_sq");
}

Graph::NodeId Graph::mse(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb))
        throw std::invalid_argument("mse shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
    const double n = static_cast<double>(ta.numel());
    double acc = 0.0;
    for (std::size_t i = 0; i < ta.data.size(); ++i) {
        double d = ta.data[i] - tb.data[i];
        acc += d * d;
    }
    return push(Tensor::from({1}, {acc / n}), requires_grad(a) || requires_grad(b),
                [a, b, n](Graph& g, NodeId self) {
                    double go = g.grad(self)[0];
                    const auto& xa = g.value(a).data;
                    const auto& xb = g.value(b).data;
                    double c = 2.0 * go / n;
                    if (g.requires_grad(a)) {
                        auto& ga = g.grad_mut(a);
                        for (std::size_t i = 0; i < xa.size(); ++i) ga[i] += c * (xa[i] - xb[i]);
                    }
                    if (g.requires_grad(b)) {
                        auto& gb = g.grad_mut(b);
                        for (std::size_t i = 0; i < xa.size(); ++i) gb[i] -= c * (xa[i] - xb[i]);
                    }
                },
                "mse");
}

Graph::NodeId Graph::bits_logistic(NodeId y, NodeId mu, NodeId log_scale, double prob_floor) {
    const Tensor& ty = value(y);
    const Tensor& tmu = value(mu);
    const Tensor& tls = value(log_scale);
    if (ty.rank() != 3)
        throw std::invalid_argument("bits_logistic latent must be [C,H,W], got " + ty.shape_str());
    int c = ty.dim(0);
    if (tmu.dims != std::vector<int>{c} || tls.dims != std::vector<int>{c})
        throw std::invalid_argument("entropy parameters must be per-channel [" + std::to_string(c) +
                                    "], got mu " + tmu.shape_str() + ", log_scale " + tls.shape_str());
    const std::size_t plane = ty.numel() / static_cast<std::size_t>(c);
    const double ln2 = M_LN2;

    double total = 0.0;
    for (int ci = 0; ci < c; ++ci) {
        const double m = tmu.data[ci];
        const double s = std::exp(tls.data[ci]);
        const double* yp = ty.data.data() + plane * ci;
        for (std::size_t i = 0; i < plane; ++i) {
            double p = sigmoid((yp[i] + 0.5 - m) / s) - sigmoid((yp[i] - 0.5 - m) / s);
            if (p < prob_floor) p = prob_floor;
            total -= std::log(p) / ln2;
        }
    }
    bool req = requires_grad(y) || requires_grad(mu) || requires_grad(log_scale);
    return push(Tensor::from({1}, {total}), req,
                [y, mu, log_scale, prob_floor, c, plane, ln2](Graph& g, NodeId self) {
                    double go = g.grad(self)[0];
                    const auto& ty = g.value(y);
                    const auto& tmu = g.value(mu);
                    const auto& tls = g.value(log_scale);
                    bool need_y = g.requires_grad(y);
                    bool need_mu = g.requires_grad(mu);
                    bool need_ls = g.requires_grad(log_scale);
                    for (int ci = 0; ci < c; ++ci) {
                        const double m = tmu.data[ci];
                        const double s = std::exp(tls.data[ci]);
                        const double* yp = ty.data.data() + plane * ci;
                        double gmu = 0.0, gls = 0.0;
                        for (std::size_t i = 0; i < plane; ++i) {
                            double zp = (yp[i] + 0.5 - m) / s;
                            double zm = (yp[i] - 0.5 - m) / s;
                            double fp = sigmoid(zp);
                            double fm = sigmoid(zm);
                            double p = fp - fm;
                            if (p < prob_floor) continue;  // floored: constant region
                            double dp = -go / (p * ln2);   // d(total)/dp
                            double dpdy = (fp * (1.0 - fp) - fm * (1.0 - fm)) / s;
                            double dpdls = -(fp * (1.0 - fp) * zp - fm * (1.0 - fm) * zm);
                            if (need_y) g.grad_mut(y)[plane * ci + i] += dp * dpdy;
                            if (need_mu) gmu += dp * -dpdy;  // dp/dmu = -dp/dy
                            if (need_ls) gls += dp * dpdls;
                        }
                        if (need_mu) g.grad_mut(mu)[ci] += gmu;
                        if (need_ls) g.grad_mut(log_scale)[ci] += gls;
                    }
                },
                "bits_logistic");
}

Graph::NodeId Graph::clamp01(NodeId a) {
    Tensor out = value(a);
    for (double& x : out.data) {
        if (x < 0.0) x = 0.0;
        if (x > 1.0) x = 1.0;
    }
    return push(std::move(out), requires_grad(a),
                [a](Graph& g, NodeId self) {
                    if (!g.requires_grad(a)) return;
                    const auto& go = g.grad(self);
                    const auto& x = g.value(a).data;
                    auto& ga = g.grad_mut(a);
                    for (std::size_t i = 0; i < go.size(); ++i)
                        if (x[i] >= 0.0 && x[i] <= 1.0) ga[i] += go[i];
                },
                "clamp01");
}

Graph::NodeId Graph::custom(Tensor value, std::vector<NodeId> deps, BackwardFn back, bool check) {
    bool req = false;
    for (NodeId d : deps) req = req || requires_grad(d);
    return push(std::move(value), req, req ? std::move(back) : BackwardFn(), "custom", check);
}

void Graph::backward(NodeId scalar_out) {
    if (ran_backward_) throw std::logic_error("backward already ran on this graph");
    const Tensor& out = value(scalar_out);
    if (out.numel() != 1) throw std::invalid_argument("backward target must be scalar");
    if (!requires_grad(scalar_out))
        throw std::logic_error("backward target does not require gradients");
    ran_backward_ = true;
    grad_mut(scalar_out)[0] = 1.0;
    for (NodeId i = scalar_out; i >= 0; --i) {
        Node& nd = node(i);
        if (nd.needs_grad && nd.back) nd.back(*this, i);
    }
}

}  // namespace gsmforge
