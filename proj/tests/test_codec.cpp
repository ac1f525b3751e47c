#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "gsmforge/codec.hpp"
#include "gsmforge/gradcheck.hpp"
#include "gsmforge/metrics.hpp"
#include "testutil.hpp"

using namespace gsmforge;
using testutil::random_tensor;
using testutil::synthetic_image;

namespace {

CodecModel zeroed_model(int latent = 2, int hidden = 4, double lambda = 100.0) {
    CodecConfig cc;
    cc.latent_channels = latent;
    cc.hidden_channels = hidden;
    cc.lambda = lambda;
    CodecModel m = CodecModel::init(cc, 0);
    for (auto* ps : {&m.encoder, &m.decoder}) {
        for (auto& [name, t] : ps->entries)
            for (double& v : t.data) v = 0.0;
    }
    return m;
}

CodecModel small_model(std::uint64_t seed, int latent = 2, int hidden = 4) {
    CodecConfig cc;
    cc.latent_channels = latent;
    cc.hidden_channels = hidden;
    cc.lambda = 500.0;
    return CodecModel::init(cc, seed);
}

}  // namespace

TEST_CASE("encode: zero image through zero weights gives a zero latent") {
    CodecModel m = zeroed_model();
    Image x(8, 8);
    Tensor y = encode(m, x);
    CHECK(y.dims == std::vector<int>{2, 2, 2});
    for (double v : y.data) CHECK(v == 0.0);
}

TEST_CASE("encode: 3x64x64 with 32 latent channels yields 32x16x16") {
    CodecConfig cc;
    cc.latent_channels = 32;
    cc.hidden_channels = 8;
    CodecModel m = CodecModel::init(cc, 3);
    Image x = synthetic_image(1, 64, 64);
    Tensor y = encode(m, x);
    CHECK(y.dims == std::vector<int>{32, 16, 16});
}

TEST_CASE("encode rejects spatial dims not divisible by 4") {
    CodecModel m = small_model(4);
    Image x(6, 6);
    CHECK_THROWS_WITH_AS((void)encode(m, x), doctest::Contains("divisible by 4"),
                         std::invalid_argument);
}

TEST_CASE("encode gradient w.r.t. the input passes the finite-difference check") {
    CodecModel m = small_model(5);
    Image x = synthetic_image(2, 8, 8);
    ScalarFn f = [&](const Tensor& t, Tensor* grad_out) {
        Graph g;
        CodecNodes p = mount_params(g, m, false);
        Graph::NodeId xn = g.leaf(t, grad_out != nullptr);
        Graph::NodeId out = g.sum_sq(build_encode(g, p, xn));
        double v = g.value(out).data[0];
        if (grad_out) {
            g.backward(out);
            grad_out->dims = t.dims;
            grad_out->data = g.grad(xn);
        }
        return v;
    };
    CHECK(gradient_check(f, x.t, 1e-5) < 1e-4);
}

TEST_CASE("quantize: straight-through estimator rounds forward, unit gradient backward") {
    Graph g;
    Graph::NodeId y = g.leaf(Tensor::from({1}, {0.4}), true);
    Graph::NodeId q = build_quantize(g, y, QuantMode::Ste, nullptr);
    CHECK(g.value(q).data[0] == 0.0);
    g.backward(g.sum(q));
    CHECK(g.grad(y)[0] == 1.0);
}

TEST_CASE("quantize: hard rounding is half-away-from-zero") {
    Tensor y = Tensor::from({2}, {-1.5, 2.49});
    Tensor q = quantize(y, QuantMode::Hard);
    CHECK(q.data[0] == -2.0);
    CHECK(q.data[1] == 2.0);
}

TEST_CASE("quantize: hard mode inside a gradient-tracked computation is rejected") {
    Graph g;
    Graph::NodeId y = g.leaf(Tensor::from({1}, {0.4}), true);
    CHECK_THROWS_WITH_AS((void)build_quantize(g, y, QuantMode::Hard, nullptr),
                         doctest::Contains("hard quantization"), std::invalid_argument);
}

TEST_CASE("quantize: seeded noise stays in (-0.5,0.5) with near-zero mean") {
    const std::size_t n = 100000;
    Tensor y;
    y.dims = {static_cast<int>(n)};
    y.data.assign(n, 0.25);
    Rng rng(123);
    Tensor q = quantize(y, QuantMode::Noise, &rng);
    double mean = 0.0;
    double lo = 1.0, hi = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
        double u = q.data[i] - y.data[i];
        lo = std::min(lo, u);
        hi = std::max(hi, u);
        mean += u;
    }
    mean /= n;
    CHECK(lo > -0.5);
    CHECK(hi < 0.5);
    CHECK(std::fabs(mean) < 0.01);
    CHECK_THROWS_AS((void)quantize(y, QuantMode::Noise, nullptr), std::invalid_argument);
}

TEST_CASE("decode: zero latent with zero weights returns the decoder bias") {
    CodecModel m = zeroed_model();
    const double bias = 0.42;
    for (double& v : m.decoder.at("deconv2.bias").data) v = bias;
    Tensor y = Tensor::zeros({2, 2, 2});
    Tensor out = decode(m, y);
    CHECK(out.dims == std::vector<int>{3, 8, 8});
    for (double v : out.data) CHECK(v == doctest::Approx(bias).epsilon(1e-12));
}

TEST_CASE("decode rejects a latent with the wrong channel count") {
    CodecModel m = small_model(6);
    Tensor y = Tensor::zeros({5, 2, 2});
    CHECK_THROWS_AS((void)decode(m, y), std::invalid_argument);
}

TEST_CASE("forward equals the manual composition elementwise") {
    CodecModel m = small_model(7);
    Image x = synthetic_image(3, 8, 8);
    Tensor manual = decode(m, quantize(encode(m, x), QuantMode::Hard));
    Tensor piped = forward_raw(m, x.t, QuantMode::Ste);
    REQUIRE(manual.dims == piped.dims);
    CHECK(testutil::max_abs_diff(manual.data, piped.data) == 0.0);
}

TEST_CASE("forward in ste mode is piecewise constant between rounding boundaries") {
    CodecModel m = small_model(8);
    Image x = synthetic_image(4, 8, 8);
    Tensor y = encode(m, x);
    for (double v : y.data) {
        double margin = std::fabs(v - std::round(v));
        // stay away from the 0.5 boundary so the probe cannot flip a cell
        CHECK(std::fabs(margin - 0.5) > 1e-4);
    }
    Tensor nudged = x.t;
    for (double& v : nudged.data) v += 1e-9;
    Tensor a = forward_raw(m, x.t, QuantMode::Ste);
    Tensor b = forward_raw(m, nudged, QuantMode::Ste);
    CHECK(testutil::max_abs_diff(a.data, b.data) == 0.0);
}

TEST_CASE("full codec composition gradient (differentiable quantizer) passes the check") {
    // A straight-through round has true derivative zero almost everywhere,
    // so finite differences cannot validate its surrogate; the end-to-end
    // gradient is checked through the quantizer's differentiable path
    // (fixed noise draw), and the STE contract is pinned separately above.
    CodecModel m = small_model(9);
    Image x = synthetic_image(5, 8, 8);
    Image t = synthetic_image(6, 8, 8);
    ScalarFn f = [&](const Tensor& in, Tensor* grad_out) {
        Graph g;
        CodecNodes p = mount_params(g, m, false);
        Graph::NodeId xn = g.leaf(in, grad_out != nullptr);
        Rng rng(4242);  // same draw every evaluation
        Graph::NodeId fx = build_forward(g, p, xn, QuantMode::Noise, &rng);
        Graph::NodeId out = g.scale(g.sum_sq(g.sub(fx, g.leaf(t.t, false))), 0.5);
        double v = g.value(out).data[0];
        if (grad_out) {
            g.backward(out);
            grad_out->dims = in.dims;
            grad_out->data = g.grad(xn);
        }
        return v;
    };
    CHECK(gradient_check(f, x.t, 1e-5) < 1e-4);
}

TEST_CASE("bits_estimate closed form at y=0, mu=0, s=1") {
    CodecModel m = zeroed_model(2, 4);
    Tensor y = Tensor::zeros({2, 4, 4});
    const double per_element = 2.029625385781438;  // -log2(sigma(.5)-sigma(-.5))
    double bits = bits_estimate(m, y);
    CHECK(bits == doctest::Approx(32.0 * per_element).epsilon(1e-9));
    CHECK(bpp_from_bits(bits, 64, 64) == doctest::Approx(32.0 * per_element / 4096.0));
}

TEST_CASE("bits_estimate probability floor engages far from the density center") {
    CodecModel m = zeroed_model(1, 4);
    Tensor y = Tensor::full({1, 2, 2}, 60.0);  // |y - mu| >> s
    double bits = bits_estimate(m, y);
    const double floor_bits = 29.897352853986263;  // -log2(1e-9)
    CHECK(bits == doctest::Approx(4.0 * floor_bits).epsilon(1e-9));
}

TEST_CASE("bits_estimate is invariant under spatial permutation within a channel") {
    Rng rng(10);
    CodecModel m = small_model(11, 3, 4);
    Tensor y = random_tensor({3, 4, 4}, rng, 3.0);
    double before = bits_estimate(m, y);
    Tensor perm = y;
    const std::size_t plane = 16;
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < plane; ++i)
            perm.data[c * plane + i] = y.data[c * plane + (plane - 1 - i)];
    CHECK(bits_estimate(m, perm) == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("rd_loss with lambda 0 equals the bpp term") {
    CodecModel m = small_model(12);
    m.lambda = 0.0;
    Image x = synthetic_image(7, 8, 8);
    Rng rng(5);
    double loss = rd_loss(m, x, QuantMode::Noise, &rng);
    Rng rng2(5);
    Tensor yq = quantize(encode(m, x), QuantMode::Noise, &rng2);
    CHECK(loss == doctest::Approx(bpp_from_bits(bits_estimate(m, yq), 8, 8)).epsilon(1e-12));
}

TEST_CASE("rd_loss with a perfect reconstruction equals the bpp term") {
    CodecModel m = zeroed_model();
    const double c = 0.375;
    for (double& v : m.decoder.at("deconv2.bias").data) v = c;
    Image x(8, 8);
    for (double& v : x.t.data) v = c;  // codec output is exactly x
    double loss = rd_loss(m, x, QuantMode::Hard);
    Tensor yq = quantize(encode(m, x), QuantMode::Hard);
    CHECK(loss == doctest::Approx(bpp_from_bits(bits_estimate(m, yq), 8, 8)).epsilon(1e-12));
}

TEST_CASE("rd_loss recomputes from bits_estimate and MSE on a random instance") {
    CodecModel m = small_model(13);
    Image x = synthetic_image(8, 8, 8);
    double loss = rd_loss(m, x, QuantMode::Ste);
    Tensor yq = quantize(encode(m, x), QuantMode::Ste);
    Tensor xhat = decode(m, yq);
    double expect = bpp_from_bits(bits_estimate(m, yq), 8, 8) + m.lambda * mse(x.t, xhat);
    CHECK(loss == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("rd_loss grows with distortion at a fixed rate term") {
    // Zero-weight codec: the latent (hence the rate) ignores the input, so
    // only the MSE term moves.
    CodecModel m = zeroed_model();
    m.lambda = 100.0;
    for (double& v : m.decoder.at("deconv2.bias").data) v = 0.5;
    Image near_img(8, 8), far_img(8, 8);
    for (double& v : near_img.t.data) v = 0.45;
    for (double& v : far_img.t.data) v = 0.1;
    CHECK(rd_loss(m, near_img, QuantMode::Hard) < rd_loss(m, far_img, QuantMode::Hard));
}

TEST_CASE("hard quantization is idempotent on already-integral latents") {
    Rng rng(14);
    Tensor y = random_tensor({2, 3, 3}, rng, 4.0);
    Tensor q1 = quantize(y, QuantMode::Hard);
    Tensor q2 = quantize(q1, QuantMode::Hard);
    CHECK(q1.data == q2.data);
}

TEST_CASE("train: zero epochs returns the model bit-for-bit") {
    CodecModel m = small_model(15);
    std::vector<Image> data = {synthetic_image(9, 8, 8)};
    TrainResult r = train(m, data, 0, 1e-3, 1);
    for (std::size_t i = 0; i < m.encoder.entries.size(); ++i)
        CHECK(r.model.encoder.entries[i].second.data == m.encoder.entries[i].second.data);
    for (std::size_t i = 0; i < m.decoder.entries.size(); ++i)
        CHECK(r.model.decoder.entries[i].second.data == m.decoder.entries[i].second.data);
    CHECK(r.loss_history.empty());
}

TEST_CASE("train: overfits a single constant image to MSE below 1e-3") {
    CodecConfig cc;
    cc.latent_channels = 2;
    cc.hidden_channels = 4;
    cc.lambda = 4000.0;
    CodecModel m = CodecModel::init(cc, 21);
    Image x(8, 8);
    for (double& v : x.t.data) v = 0.62;
    TrainResult r = train(m, {x}, 1500, 3e-3, 2);
    REQUIRE_FALSE(r.diverged);
    Image recon = forward_image(r.model, x, QuantMode::Hard);
    CHECK(mse(recon.t, x.t) < 1e-3);
}

TEST_CASE("train: identical seeds give identical final weights") {
    CodecModel m = small_model(16);
    std::vector<Image> data = {synthetic_image(10, 8, 8), synthetic_image(11, 8, 8)};
    TrainResult a = train(m, data, 5, 1e-3, 3);
    TrainResult b = train(m, data, 5, 1e-3, 3);
    for (std::size_t i = 0; i < a.model.encoder.entries.size(); ++i)
        CHECK(a.model.encoder.entries[i].second.data == b.model.encoder.entries[i].second.data);
    CHECK(a.loss_history == b.loss_history);
}

TEST_CASE("train: divergence aborts with the last finite checkpoint") {
    CodecModel m = small_model(17);
    std::vector<Image> data = {synthetic_image(12, 8, 8)};
    TrainResult r = train(m, data, 100, 1e12, 4);  // absurd lr forces a blow-up
    CHECK(r.diverged);
    CHECK(r.completed_epochs < 100);
    for (const auto& [name, t] : r.model.encoder.entries) t.check_finite(name.c_str());
}

TEST_CASE("train rejects an empty or ragged dataset") {
    CodecModel m = small_model(18);
    CHECK_THROWS_AS((void)train(m, {}, 1, 1e-3, 0), std::invalid_argument);
    std::vector<Image> ragged = {synthetic_image(1, 8, 8), synthetic_image(2, 12, 12)};
    CHECK_THROWS_AS((void)train(m, ragged, 1, 1e-3, 0), std::invalid_argument);
}

TEST_CASE("weights save/load round-trips bit-exactly") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "gsmforge_codec_test";
    fs::create_directories(dir);
    std::string path = (dir / "w.gsmf").string();

    CodecModel m = small_model(19);
    m.lambda = 1234.5;
    save_weights(m, path);
    CodecModel l = load_weights(path);
    CHECK(l.lambda == m.lambda);
    CHECK(l.latent_channels == m.latent_channels);
    CHECK(l.hidden_channels == m.hidden_channels);
    for (std::size_t i = 0; i < m.encoder.entries.size(); ++i) {
        CHECK(l.encoder.entries[i].first == m.encoder.entries[i].first);
        CHECK(l.encoder.entries[i].second.data == m.encoder.entries[i].second.data);
    }
    for (std::size_t i = 0; i < m.entropy.entries.size(); ++i)
        CHECK(l.entropy.entries[i].second.data == m.entropy.entries[i].second.data);
    fs::remove_all(dir);
}

TEST_CASE("weights loader rejects corruption, naming the offset") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "gsmforge_codec_test2";
    fs::create_directories(dir);
    std::string path = (dir / "w.gsmf").string();
    CodecModel m = small_model(20);
    save_weights(m, path);

    SUBCASE("corrupted magic") {
        FILE* f = std::fopen(path.c_str(), "r+b");
        std::fputc('X', f);
        std::fclose(f);
        CHECK_THROWS_WITH_AS((void)load_weights(path), doctest::Contains("bad magic"),
                             std::runtime_error);
    }
    SUBCASE("truncated file") {
        auto size = fs::file_size(path);
        fs::resize_file(path, size / 2);
        CHECK_THROWS_WITH_AS((void)load_weights(path), doctest::Contains("byte offset"),
                             std::runtime_error);
    }
    fs::remove_all(dir);
}
