#include <doctest.h>

#include <cmath>

#include "gsmforge/gradcheck.hpp"
#include "gsmforge/graph.hpp"
#include "gsmforge/kernels.hpp"
#include "testutil.hpp"

using namespace gsmforge;
using testutil::max_abs_diff;
using testutil::random_tensor;

TEST_CASE("conv2d 1x1 identity kernel reproduces the input") {
    Rng rng(1);
    Tensor in = random_tensor({2, 5, 7}, rng);
    Tensor w = Tensor::from({2, 2, 1, 1}, {1, 0, 0, 1});
    Tensor b = Tensor::zeros({2});
    Tensor out = kernels::conv2d_forward(in, w, b, 1, 0);
    REQUIRE(out.dims == in.dims);
    CHECK(max_abs_diff(out.data, in.data) == 0.0);
}

TEST_CASE("conv2d 3x3 averaging kernel preserves a constant interior") {
    Tensor in = Tensor::full({1, 6, 6}, 0.37);
    Tensor w = Tensor::full({1, 1, 3, 3}, 1.0 / 9.0);
    Tensor b = Tensor::zeros({1});
    Tensor out = kernels::conv2d_forward(in, w, b, 1, 1);
    REQUIRE(out.dims == in.dims);
    for (int y = 1; y < 5; ++y)
        for (int x = 1; x < 5; ++x)
            CHECK(out.data[static_cast<std::size_t>(y) * 6 + x] == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("conv2d matches the serial reference on a strided case") {
    Rng rng(2);
    Tensor in = random_tensor({3, 4, 4}, rng);
    Tensor w = random_tensor({2, 3, 2, 2}, rng);
    Tensor b = random_tensor({2}, rng);
    Tensor fast = kernels::conv2d_forward(in, w, b, 2, 0);
    Tensor slow = ref::conv2d_forward(in, w, b, 2, 0);
    REQUIRE(fast.dims == slow.dims);
    CHECK(max_abs_diff(fast.data, slow.data) < 1e-10);
}

TEST_CASE("conv2d rejects bad geometry with dims in the message") {
    Rng rng(3);
    Tensor in = random_tensor({3, 5, 5}, rng);
    Tensor w = random_tensor({2, 4, 3, 3}, rng);  // channel mismatch
    Tensor b = Tensor::zeros({2});
    CHECK_THROWS_WITH_AS(kernels::conv2d_forward(in, w, b, 1, 0),
                         doctest::Contains("channels"), std::invalid_argument);
    Tensor w2 = random_tensor({2, 3, 2, 2}, rng);
    // (5 - 2) is not divisible by stride 2
    CHECK_THROWS_WITH_AS(kernels::conv2d_forward(in, w2, b, 2, 0),
                         doctest::Contains("non-integral"), std::invalid_argument);
}

TEST_CASE("deconv2d 1x1 identity kernel at stride 1 reproduces the input") {
    Rng rng(4);
    Tensor in = random_tensor({2, 4, 6}, rng);
    Tensor w = Tensor::from({2, 2, 1, 1}, {1, 0, 0, 1});
    Tensor b = Tensor::zeros({2});
    Tensor out = kernels::deconv2d_forward(in, w, b, 1, 0);
    REQUIRE(out.dims == in.dims);
    CHECK(max_abs_diff(out.data, in.data) == 0.0);
}

TEST_CASE("deconv2d matches the serial scatter reference") {
    Rng rng(5);
    for (int stride : {1, 2, 3}) {
        Tensor in = random_tensor({3, 4, 5}, rng);
        Tensor w = random_tensor({3, 2, 3, 3}, rng);
        Tensor b = random_tensor({2}, rng);
        Tensor fast = kernels::deconv2d_forward(in, w, b, stride, 1);
        Tensor slow = ref::deconv2d_forward(in, w, b, stride, 1);
        REQUIRE(fast.dims == slow.dims);
        CHECK(max_abs_diff(fast.data, slow.data) < 1e-10);
    }
}

TEST_CASE("deconv2d input gradient is a conv2d forward of the upstream gradient") {
    // conv2d and deconv2d with the same geometry are adjoint linear maps:
    // dL/dx of deconv(x; W) is conv(g; W) with the kernel dims relabeled.
    Rng rng(6);
    const int k = 3;
    for (int stride : {1, 2}) {
        const int pad = 1;
        Tensor in = random_tensor({2, 5, 5}, rng);
        Tensor w = random_tensor({2, 3, k, k}, rng);  // deconv kernel [cin,cout,k,k]
        Tensor b = Tensor::zeros({3});
        Tensor out = kernels::deconv2d_forward(in, w, b, stride, pad);
        Tensor gout = random_tensor(out.dims, rng);

        std::vector<double> gin(in.numel(), 0.0);
        kernels::deconv2d_backward(in, w, gout, stride, pad, &gin, nullptr, nullptr);

        Tensor wc = Tensor::from({2, 3, k, k}, w.data);  // same layout, conv reading
        Tensor b2 = Tensor::zeros({2});
        Tensor via_conv = kernels::conv2d_forward(gout, wc, b2, stride, pad);
        REQUIRE(via_conv.dims == in.dims);
        CHECK(max_abs_diff(via_conv.data, gin) < 1e-10);
    }
}

TEST_CASE("stride-1 deconv2d is a conv2d with the flipped kernel") {
    Rng rng(61);
    const int k = 3, pad = 0;
    Tensor in = random_tensor({2, 5, 5}, rng);
    Tensor w = random_tensor({2, 3, k, k}, rng);
    Tensor b = Tensor::zeros({3});
    Tensor via_deconv = kernels::deconv2d_forward(in, w, b, 1, pad);

    // conv kernel [cout=3][cin=2], channel-transposed and spatially flipped
    Tensor wf = Tensor::zeros({3, 2, k, k});
    for (int o = 0; o < 3; ++o)
        for (int c = 0; c < 2; ++c)
            for (int y = 0; y < k; ++y)
                for (int x = 0; x < k; ++x)
                    wf.data[((static_cast<std::size_t>(o) * 2 + c) * k + y) * k + x] =
                        w.data[((static_cast<std::size_t>(c) * 3 + o) * k + (k - 1 - y)) * k +
                               (k - 1 - x)];
    Tensor via_conv = kernels::conv2d_forward(in, wf, b, 1, k - 1 - pad);
    REQUIRE(via_conv.dims == via_deconv.dims);
    CHECK(max_abs_diff(via_conv.data, via_deconv.data) < 1e-10);
}

TEST_CASE("leaky_relu forward values and edge cases") {
    Graph g;
    Graph::NodeId x = g.leaf(Tensor::from({4}, {1.5, -1.0, 0.0, 2.0}), false);
    Graph::NodeId y = g.leaky_relu(x, 0.2);
    CHECK(g.value(y).data[0] == 1.5);
    CHECK(g.value(y).data[1] == doctest::Approx(-0.2));
    CHECK(g.value(y).data[2] == 0.0);
    CHECK(g.value(y).data[3] == 2.0);
    CHECK_THROWS_AS((void)g.leaky_relu(x, 1.0), std::invalid_argument);
}

TEST_CASE("leaky_relu subgradient at zero is the negative-side slope") {
    Graph g;
    Graph::NodeId x = g.leaf(Tensor::from({3}, {0.0, -1.0, 1.0}), true);
    Graph::NodeId s = g.sum(g.leaky_relu(x, 0.25));
    g.backward(s);
    CHECK(g.grad(x)[0] == 0.25);
    CHECK(g.grad(x)[1] == 0.25);
    CHECK(g.grad(x)[2] == 1.0);
}

namespace {

// Wraps a graph-built scalar function of one tensor for gradient_check.
ScalarFn graph_fn(const std::function<Graph::NodeId(Graph&, Graph::NodeId)>& build) {
    return [build](const Tensor& x, Tensor* grad_out) {
        Graph g;
        Graph::NodeId xn = g.leaf(x, grad_out != nullptr);
        Graph::NodeId out = build(g, xn);
        double v = g.value(out).data[0];
        if (grad_out) {
            g.backward(out);
            grad_out->dims = x.dims;
            grad_out->data = g.grad(xn);
        }
        return v;
    };
}

}  // namespace

TEST_CASE("gradient_check on closed-form cases") {
    Rng rng(7);
    Tensor at = random_tensor({3, 4}, rng);

    SUBCASE("quadratic") {
        ScalarFn f = [](const Tensor& x, Tensor* grad_out) {
            double v = 0.0;
            for (double e : x.data) v += 0.5 * e * e;
            if (grad_out) *grad_out = x;
            return v;
        };
        CHECK(gradient_check(f, at, 1e-4) < 1e-6);
    }
    SUBCASE("constant function has zero error") {
        ScalarFn f = [](const Tensor& x, Tensor* grad_out) {
            if (grad_out) {
                *grad_out = x;
                for (double& v : grad_out->data) v = 0.0;
            }
            return 3.5;
        };
        CHECK(gradient_check(f, at, 1e-4) == 0.0);
    }
    SUBCASE("rejects non-finite values") {
        ScalarFn f = [](const Tensor& x, Tensor* grad_out) {
            if (grad_out) *grad_out = x;
            return std::numeric_limits<double>::quiet_NaN();
        };
        CHECK_THROWS_AS(gradient_check(f, at, 1e-4), std::runtime_error);
    }
    SUBCASE("rejects non-positive step") {
        ScalarFn f = [](const Tensor& x, Tensor* grad_out) {
            if (grad_out) *grad_out = x;
            return 0.0;
        };
        CHECK_THROWS_AS(gradient_check(f, at, 0.0), std::invalid_argument);
    }
}

TEST_CASE("gradient_check on conv -> leaky_relu -> sum composition") {
    Rng rng(8);
    Tensor at = random_tensor({2, 6, 6}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng);
    Tensor b = random_tensor({3}, rng, 0.1);
    ScalarFn f = graph_fn([&](Graph& g, Graph::NodeId x) {
        Graph::NodeId c = g.conv2d(x, g.leaf(w, false), g.leaf(b, false), 1, 1);
        return g.sum(g.leaky_relu(c, 0.2));
    });
    CHECK(gradient_check(f, at, 1e-5) < 1e-4);
}

TEST_CASE("every primitive's backward matches central finite differences") {
    // Property test over randomized shapes; this is the workhorse gradient
    // oracle for the tape ops.
    int cases = 0;
    for (std::uint64_t seed = 100; cases < 50; ++seed) {
        Rng rng(seed);
        int h = 3 + static_cast<int>(rng.next_u64() % 4);
        int w = 3 + static_cast<int>(rng.next_u64() % 4);
        int cin = 1 + static_cast<int>(rng.next_u64() % 3);
        int cout = 1 + static_cast<int>(rng.next_u64() % 3);
        int k = 1 + static_cast<int>(rng.next_u64() % 3);
        if (k > h || k > w) continue;
        Tensor at = random_tensor({cin, h, w}, rng);
        Tensor wc = random_tensor({cout, cin, k, k}, rng);
        Tensor wd = random_tensor({cin, cout, k, k}, rng);
        Tensor b = random_tensor({cout}, rng, 0.2);
        Tensor mu = random_tensor({cin}, rng, 0.3);
        Tensor ls = random_tensor({cin}, rng, 0.3);

        int which = cases % 5;
        ScalarFn f;
        switch (which) {
            case 0:
                f = graph_fn([&](Graph& g, Graph::NodeId x) {
                    return g.sum_sq(g.conv2d(x, g.leaf(wc, false), g.leaf(b, false), 1, k / 2));
                });
                break;
            case 1:
                f = graph_fn([&](Graph& g, Graph::NodeId x) {
                    return g.sum_sq(g.deconv2d(x, g.leaf(wd, false), g.leaf(b, false), 2, k > 1 ? 1 : 0));
                });
                break;
            case 2:
                f = graph_fn([&](Graph& g, Graph::NodeId x) {
                    return g.sum(g.leaky_relu(g.affine(x, 1.3, -0.2), 0.1));
                });
                break;
            case 3:
                f = graph_fn([&](Graph& g, Graph::NodeId x) {
                    return g.mse(x, g.leaf(Tensor::full(at.dims, 0.1), false));
                });
                break;
            default:
                f = graph_fn([&](Graph& g, Graph::NodeId x) {
                    return g.bits_logistic(x, g.leaf(mu, false), g.leaf(ls, false), 1e-9);
                });
                break;
        }
        CAPTURE(seed);
        CAPTURE(which);
        CHECK(gradient_check(f, at, 1e-5) < 1e-4);
        ++cases;
    }
}

TEST_CASE("bits_logistic entropy-parameter gradients match finite differences") {
    Rng rng(42);
    Tensor y = random_tensor({2, 3, 3}, rng, 2.0);
    Tensor mu0 = random_tensor({2}, rng, 0.5);
    Tensor ls0 = random_tensor({2}, rng, 0.5);

    ScalarFn f_mu = [&](const Tensor& m, Tensor* grad_out) {
        Graph g;
        Graph::NodeId mn = g.leaf(m, grad_out != nullptr);
        Graph::NodeId out = g.bits_logistic(g.leaf(y, false), mn, g.leaf(ls0, false), 1e-9);
        double v = g.value(out).data[0];
        if (grad_out) {
            g.backward(out);
            grad_out->dims = m.dims;
            grad_out->data = g.grad(mn);
        }
        return v;
    };
    CHECK(gradient_check(f_mu, mu0, 1e-5) < 1e-4);

    ScalarFn f_ls = [&](const Tensor& ls, Tensor* grad_out) {
        Graph g;
        Graph::NodeId ln = g.leaf(ls, grad_out != nullptr);
        Graph::NodeId out = g.bits_logistic(g.leaf(y, false), g.leaf(mu0, false), ln, 1e-9);
        double v = g.value(out).data[0];
        if (grad_out) {
            g.backward(out);
            grad_out->dims = ls.dims;
            grad_out->data = g.grad(ln);
        }
        return v;
    };
    CHECK(gradient_check(f_ls, ls0, 1e-5) < 1e-4);
}

TEST_CASE("conv2d and deconv2d are linear in the input with zero bias") {
    Rng rng(9);
    Tensor x = random_tensor({3, 6, 6}, rng);
    Tensor y = random_tensor({3, 6, 6}, rng);
    Tensor w = random_tensor({2, 3, 3, 3}, rng);
    Tensor wd = random_tensor({3, 2, 3, 3}, rng);
    Tensor b = Tensor::zeros({2});
    const double a = 1.7, c = -0.6;

    Tensor axcy(x.dims);
    for (std::size_t i = 0; i < axcy.data.size(); ++i)
        axcy.data[i] = a * x.data[i] + c * y.data[i];

    for (bool transposed : {false, true}) {
        auto fwd = [&](const Tensor& t) {
            return transposed ? kernels::deconv2d_forward(t, wd, b, 1, 1)
                              : kernels::conv2d_forward(t, w, b, 1, 1);
        };
        Tensor lhs = fwd(axcy);
        Tensor fx = fwd(x), fy = fwd(y);
        double worst = 0.0;
        for (std::size_t i = 0; i < lhs.data.size(); ++i)
            worst = std::max(worst, std::fabs(lhs.data[i] - (a * fx.data[i] + c * fy.data[i])));
        CHECK(worst < 1e-10);
    }
}

TEST_CASE("round_ste rounds forward and passes gradients through") {
    Graph g;
    Graph::NodeId x = g.leaf(Tensor::from({3}, {0.4, -1.5, 2.49}), true);
    Graph::NodeId y = g.round_ste(x);
    CHECK(g.value(y).data[0] == 0.0);
    CHECK(g.value(y).data[1] == -2.0);  // half rounds away from zero
    CHECK(g.value(y).data[2] == 2.0);
    Graph::NodeId s = g.sum(y);
    g.backward(s);
    for (double gv : g.grad(x)) CHECK(gv == 1.0);
}

TEST_CASE("identical seeds produce bit-identical op outputs") {
    auto run = [] {
        Rng rng(77);
        Tensor in = random_tensor({3, 8, 8}, rng);
        Tensor w = random_tensor({4, 3, 3, 3}, rng);
        Tensor b = random_tensor({4}, rng);
        return kernels::conv2d_forward(in, w, b, 1, 1);
    };
    Tensor a = run(), b = run();
    CHECK(a.data == b.data);
}

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor::zeros({0, 3}), std::invalid_argument);

    ParameterSet ps;
    ps.add("a", Tensor::zeros({2}));
    CHECK_THROWS_AS(ps.add("a", Tensor::zeros({2})), std::invalid_argument);
    ps.add("b", Tensor::zeros({1}));
    CHECK(ps.entries[0].first == "a");
    CHECK(ps.entries[1].first == "b");

    Graph g;
    Tensor bad = Tensor::zeros({2});
    bad.data[1] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS((void)g.leaf(bad, false), std::runtime_error);
}

TEST_CASE("gradient accumulation is additive and explicit") {
    // Two uses of the same leaf accumulate; a second backward is refused.
    Graph g;
    Graph::NodeId x = g.leaf(Tensor::from({2}, {1.0, 2.0}), true);
    Graph::NodeId s = g.sum(g.add(x, x));
    g.backward(s);
    CHECK(g.grad(x)[0] == 2.0);
    CHECK(g.grad(x)[1] == 2.0);
    CHECK_THROWS_AS(g.backward(s), std::logic_error);
}
