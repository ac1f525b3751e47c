#include "gsmforge/codec.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>

namespace gsmforge {

namespace {

Tensor init_uniform(std::vector<int> dims, double bound, Rng& rng) {
    Tensor t(std::move(dims));
    for (double& x : t.data) x = rng.uniform_symmetric(bound);
    return t;
}

double glorot_bound(int fan_in, int fan_out) { return std::sqrt(6.0 / (fan_in + fan_out)); }

}  // namespace

CodecModel CodecModel::init(const CodecConfig& cfg, std::uint64_t seed) {
    if (cfg.latent_channels <= 0 || cfg.hidden_channels <= 0)
        throw std::invalid_argument("channel counts must be positive");
    if (cfg.lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
    const int k = kCodecKernel, kk = k * k;
    const int hid = cfg.hidden_channels, lat = cfg.latent_channels;
    Rng rng(Rng::derive(seed, 0x636f646563ULL));

    CodecModel m;
    m.lambda = cfg.lambda;
    m.latent_channels = lat;
    m.hidden_channels = hid;
    m.encoder.add("conv1.weight", init_uniform({hid, 3, k, k}, glorot_bound(3 * kk, hid * kk), rng));
    m.encoder.add("conv1.bias", Tensor::zeros({hid}));
    m.encoder.add("conv2.weight", init_uniform({lat, hid, k, k}, glorot_bound(hid * kk, lat * kk), rng));
    m.encoder.add("conv2.bias", Tensor::zeros({lat}));
    m.decoder.add("deconv1.weight", init_uniform({lat, hid, k, k}, glorot_bound(lat * kk, hid * kk), rng));
    m.decoder.add("deconv1.bias", Tensor::zeros({hid}));
    m.decoder.add("deconv2.weight", init_uniform({hid, 3, k, k}, glorot_bound(hid * kk, 3 * kk), rng));
    m.decoder.add("deconv2.bias", Tensor::zeros({3}));
    m.entropy.add("mu", Tensor::zeros({lat}));
    m.entropy.add("log_scale", Tensor::zeros({lat}));
    return m;
}

void CodecModel::validate() const {
    const Tensor& w2 = encoder.at("conv2.weight");
    if (w2.dim(0) != latent_channels)
        throw std::invalid_argument("encoder output channels " + std::to_string(w2.dim(0)) +
                                    " != latent_channels " + std::to_string(latent_channels));
    if (entropy.at("mu").dims != std::vector<int>{latent_channels} ||
        entropy.at("log_scale").dims != std::vector<int>{latent_channels})
        throw std::invalid_argument("entropy parameters must have one entry per latent channel");
    entropy.at("log_scale").check_finite("log_scale");
}

CodecNodes mount_params(Graph& g, const CodecModel& model, bool requires_grad) {
    CodecNodes p;
    p.enc_w1 = g.leaf(model.encoder.at("conv1.weight"), requires_grad);
    p.enc_b1 = g.leaf(model.encoder.at("conv1.bias"), requires_grad);
    p.enc_w2 = g.leaf(model.encoder.at("conv2.weight"), requires_grad);
    p.enc_b2 = g.leaf(model.encoder.at("conv2.bias"), requires_grad);
    p.dec_w1 = g.leaf(model.decoder.at("deconv1.weight"), requires_grad);
    p.dec_b1 = g.leaf(model.decoder.at("deconv1.bias"), requires_grad);
    p.dec_w2 = g.leaf(model.decoder.at("deconv2.weight"), requires_grad);
    p.dec_b2 = g.leaf(model.decoder.at("deconv2.bias"), requires_grad);
    p.mu = g.leaf(model.entropy.at("mu"), requires_grad);
    p.log_scale = g.leaf(model.entropy.at("log_scale"), requires_grad);
    return p;
}

Graph::NodeId build_encode(Graph& g, const CodecNodes& p, Graph::NodeId x) {
    const Tensor& xin = g.value(x);
    if (xin.rank() != 3 || xin.dim(0) != 3)
        throw std::invalid_argument("encode input must be [3,H,W], got " + xin.shape_str());
    if (xin.dim(1) % 4 != 0 || xin.dim(2) % 4 != 0)
        throw std::invalid_argument("encode input spatial dims must be divisible by 4, got " +
                                    xin.shape_str());
    Graph::NodeId h = g.conv2d(x, p.enc_w1, p.enc_b1, kCodecStride, kCodecPad);
    h = g.leaky_relu(h, kCodecLeakySlope);
    return g.conv2d(h, p.enc_w2, p.enc_b2, kCodecStride, kCodecPad);
}

Graph::NodeId build_quantize(Graph& g, Graph::NodeId y, QuantMode mode, Rng* rng) {
    switch (mode) {
        case QuantMode::Noise:
            if (!rng) throw std::invalid_argument("noise quantization requires a seeded RNG");
            return g.add_uniform_noise(y, *rng);
        case QuantMode::Ste:
            return g.round_ste(y);
        case QuantMode::Hard:
            return g.round_hard(y);
    }
    throw std::logic_error("unreachable quantize mode");
}

Graph::NodeId build_decode(Graph& g, const CodecNodes& p, Graph::NodeId yq) {
    const Tensor& y = g.value(yq);
    const Tensor& w1 = g.value(p.dec_w1);
    if (y.rank() != 3 || y.dim(0) != w1.dim(0))
        throw std::invalid_argument("decode latent shape " + y.shape_str() +
                                    " does not match decoder input channels " +
                                    std::to_string(w1.dim(0)));
    Graph::NodeId h = g.deconv2d(yq, p.dec_w1, p.dec_b1, kCodecStride, kCodecPad);
    h = g.leaky_relu(h, kCodecLeakySlope);
    return g.deconv2d(h, p.dec_w2, p.dec_b2, kCodecStride, kCodecPad);
}

Graph::NodeId build_forward(Graph& g, const CodecNodes& p, Graph::NodeId x, QuantMode mode,
                            Rng* rng) {
    return build_decode(g, p, build_quantize(g, build_encode(g, p, x), mode, rng));
}

Graph::NodeId build_bits(Graph& g, const CodecNodes& p, Graph::NodeId yq) {
    return g.bits_logistic(yq, p.mu, p.log_scale, kBitsProbFloor);
}

Graph::NodeId build_rd_loss(Graph& g, const CodecNodes& p, Graph::NodeId x, QuantMode mode,
                            Rng* rng, double lambda) {
    const Tensor& xin = g.value(x);
    const double pixels = static_cast<double>(xin.dim(1)) * xin.dim(2);
    Graph::NodeId y = build_encode(g, p, x);
    Graph::NodeId yq = build_quantize(g, y, mode, rng);
    Graph::NodeId xhat = build_decode(g, p, yq);
    Graph::NodeId bpp = g.scale(build_bits(g, p, yq), 1.0 / pixels);
    Graph::NodeId dist = g.scale(g.mse(x, xhat), lambda);
    return g.add(bpp, dist);
}

Tensor encode(const CodecModel& model, const Image& x) {
    Graph g;
    CodecNodes p = mount_params(g, model, false);
    return g.value(build_encode(g, p, g.leaf(x.t, false)));
}

Tensor quantize(const Tensor& y, QuantMode mode, Rng* rng) {
    Tensor out = y;
    out.grad.clear();
    switch (mode) {
        case QuantMode::Noise:
            if (!rng) throw std::invalid_argument("noise quantization requires a seeded RNG");
            for (double& v : out.data) v += rng->uniform_open() - 0.5;
            break;
        case QuantMode::Ste:
        case QuantMode::Hard:
            for (double& v : out.data) v = std::round(v);
            break;
    }
    return out;
}

Tensor decode(const CodecModel& model, const Tensor& yq) {
    Graph g;
    CodecNodes p = mount_params(g, model, false);
    return g.value(build_decode(g, p, g.leaf(yq, false)));
}

Tensor forward_raw(const CodecModel& model, const Tensor& x, QuantMode mode, Rng* rng) {
    Graph g;
    CodecNodes p = mount_params(g, model, false);
    return g.value(build_forward(g, p, g.leaf(x, false), mode, rng));
}

Image forward_image(const CodecModel& model, const Image& x, QuantMode mode, Rng* rng) {
    return clamp_to_image(forward_raw(model, x.t, mode, rng));
}

double bits_estimate(const CodecModel& model, const Tensor& yq) {
    Graph g;
    CodecNodes p = mount_params(g, model, false);
    return g.value(build_bits(g, p, g.leaf(yq, false))).data[0];
}

double bpp_from_bits(double bits, int height, int width) {
    return bits / (static_cast<double>(height) * width);
}

double rd_loss(const CodecModel& model, const Image& x, QuantMode mode, Rng* rng) {
    Graph g;
    CodecNodes p = mount_params(g, model, false);
    return g.value(build_rd_loss(g, p, g.leaf(x.t, false), mode, rng, model.lambda)).data[0];
}

namespace {

std::vector<std::pair<std::string, Tensor*>> all_params(CodecModel& m) {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (auto& [n, t] : m.encoder.entries) out.emplace_back("encoder." + n, &t);
    for (auto& [n, t] : m.decoder.entries) out.emplace_back("decoder." + n, &t);
    for (auto& [n, t] : m.entropy.entries) out.emplace_back("entropy." + n, &t);
    return out;
}

std::vector<Graph::NodeId> node_list(const CodecNodes& p) {
    return {p.enc_w1, p.enc_b1, p.enc_w2, p.enc_b2,
            p.dec_w1, p.dec_b1, p.dec_w2, p.dec_b2, p.mu, p.log_scale};
}

}  // namespace

TrainResult train(const CodecModel& model, const std::vector<Image>& dataset, int epochs,
                  double lr, std::uint64_t seed, int lr_halve_patience) {
    if (dataset.empty()) throw std::invalid_argument("training dataset is empty");
    for (const Image& img : dataset)
        if (!img.t.same_shape(dataset.front().t))
            throw std::invalid_argument("training images must have a uniform shape");
    model.validate();

    TrainResult result;
    result.model = model;
    if (epochs <= 0) return result;

    CodecModel checkpoint = result.model;
    double best_loss = 0.0;
    bool have_best = false;
    int stall = 0;

    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::vector<std::vector<double>> acc;
        double epoch_loss = 0.0;
        bool finite = true;
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(epoch) * dataset.size() + i));
            Graph g;
            CodecNodes p = mount_params(g, result.model, true);
            double loss;
            try {
                Graph::NodeId ln =
                    build_rd_loss(g, p, g.leaf(dataset[i].t, false), QuantMode::Noise, &rng,
                                  result.model.lambda);
                loss = g.value(ln).data[0];
                g.backward(ln);
            } catch (const std::runtime_error&) {
                finite = false;
                break;
            }
            if (!std::isfinite(loss)) {
                finite = false;
                break;
            }
            epoch_loss += loss;
            auto ids = node_list(p);
            if (acc.empty()) acc.resize(ids.size());
            for (std::size_t j = 0; j < ids.size(); ++j) {
                const auto& gr = g.grad(ids[j]);
                if (acc[j].empty()) acc[j].assign(gr.size(), 0.0);
                for (std::size_t k = 0; k < gr.size(); ++k) acc[j][k] += gr[k];
            }
        }
        if (!finite) {
            result.model = checkpoint;
            result.diverged = true;
            break;
        }
        epoch_loss /= static_cast<double>(dataset.size());
        result.loss_history.push_back(epoch_loss);
        checkpoint = result.model;
        result.completed_epochs = epoch + 1;

        auto params = all_params(result.model);
        const double step = lr / static_cast<double>(dataset.size());
        for (std::size_t j = 0; j < params.size(); ++j) {
            Tensor& t = *params[j].second;
            for (std::size_t k = 0; k < t.data.size(); ++k) t.data[k] -= step * acc[j][k];
        }

        if (lr_halve_patience > 0) {
            if (!have_best || epoch_loss < best_loss - 1e-12) {
                best_loss = epoch_loss;
                have_best = true;
                stall = 0;
            } else if (++stall >= lr_halve_patience) {
                lr *= 0.5;
                stall = 0;
            }
        }
    }
    return result;
}

namespace {

class WeightWriter {
public:
    explicit WeightWriter(const std::string& path) : f_(std::fopen(path.c_str(), "wb")) {
        if (!f_) throw std::runtime_error("cannot open " + path + " for writing");
    }
    ~WeightWriter() {
        if (f_) std::fclose(f_);
    }
    void bytes(const void* p, std::size_t n) {
        if (std::fwrite(p, 1, n, f_) != n) throw std::runtime_error("short write");
    }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void f64(double v) { bytes(&v, 8); }

private:
    std::FILE* f_;
};

class WeightReader {
public:
    explicit WeightReader(const std::string& path)
        : path_(path), f_(std::fopen(path.c_str(), "rb")) {
        if (!f_) throw std::runtime_error("cannot open " + path + " for reading");
    }
    ~WeightReader() {
        if (f_) std::fclose(f_);
    }
    void bytes(void* p, std::size_t n) {
        if (std::fread(p, 1, n, f_) != n)
            throw std::runtime_error("truncated weights file " + path_ + " at byte offset " +
                                     std::to_string(offset_));
        offset_ += n;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, 4);
        return v;
    }
    double f64() {
        double v;
        bytes(&v, 8);
        return v;
    }
    std::size_t offset() const { return offset_; }

private:
    std::string path_;
    std::FILE* f_;
    std::size_t offset_ = 0;
};

constexpr char kMagic[4] = {'G', 'S', 'M', 'F'};
constexpr std::uint32_t kFormatVersion = 1;

static_assert(sizeof(double) == 8, "64-bit IEEE doubles required");

}  // namespace

void save_weights(const CodecModel& model, const std::string& path) {
    CodecModel copy = model;  // all_params wants mutable access
    WeightWriter w(path);
    w.bytes(kMagic, 4);
    w.u32(kFormatVersion);
    w.f64(model.lambda);
    auto params = all_params(copy);
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (auto& [name, t] : params) {
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.bytes(name.data(), name.size());
        w.u32(static_cast<std::uint32_t>(t->dims.size()));
        for (int d : t->dims) w.u32(static_cast<std::uint32_t>(d));
        w.bytes(t->data.data(), t->data.size() * sizeof(double));
    }
}

CodecModel load_weights(const std::string& path) {
    WeightReader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("bad magic in " + path + " at byte offset 0");
    std::uint32_t version = r.u32();
    if (version != kFormatVersion)
        throw std::runtime_error("unsupported weights format version " + std::to_string(version) +
                                 " in " + path + " at byte offset 4");
    CodecModel m;
    m.lambda = r.f64();
    std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint32_t name_len = r.u32();
        if (name_len > 4096)
            throw std::runtime_error("implausible tensor name length in " + path +
                                     " at byte offset " + std::to_string(r.offset() - 4));
        std::string name(name_len, '\0');
        r.bytes(name.data(), name_len);
        std::uint32_t rank = r.u32();
        if (rank > 8)
            throw std::runtime_error("implausible tensor rank in " + path + " at byte offset " +
                                     std::to_string(r.offset() - 4));
        std::vector<int> dims(rank);
        for (std::uint32_t d = 0; d < rank; ++d) dims[d] = static_cast<int>(r.u32());
        Tensor t(dims);
        r.bytes(t.data.data(), t.data.size() * sizeof(double));

        auto dot = name.find('.');
        if (dot == std::string::npos)
            throw std::runtime_error("malformed tensor name '" + name + "' in " + path);
        std::string set = name.substr(0, dot), local = name.substr(dot + 1);
        if (set == "encoder")
            m.encoder.add(local, std::move(t));
        else if (set == "decoder")
            m.decoder.add(local, std::move(t));
        else if (set == "entropy")
            m.entropy.add(local, std::move(t));
        else
            throw std::runtime_error("unknown parameter set '" + set + "' in " + path);
    }
    for (const char* need : {"conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias"})
        if (!m.encoder.has(need)) throw std::runtime_error(path + " is missing encoder." + need);
    for (const char* need : {"deconv1.weight", "deconv1.bias", "deconv2.weight", "deconv2.bias"})
        if (!m.decoder.has(need)) throw std::runtime_error(path + " is missing decoder." + need);
    for (const char* need : {"mu", "log_scale"})
        if (!m.entropy.has(need)) throw std::runtime_error(path + " is missing entropy." + need);
    m.latent_channels = m.entropy.at("mu").dim(0);
    m.hidden_channels = m.encoder.at("conv1.weight").dim(0);
    m.validate();
    return m;
}

}  // namespace gsmforge
