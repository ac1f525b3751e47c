#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gsmforge/graph.hpp"
#include "gsmforge/image.hpp"
#include "gsmforge/rng.hpp"
#include "gsmforge/tensor.hpp"

namespace gsmforge {

/// Quantization surrogates. Noise is the training surrogate, Ste the attack
/// surrogate (round forward, identity backward), Hard the deployed rounding.
enum class QuantMode { Noise, Ste, Hard };

struct CodecConfig {
    int latent_channels = 8;
    int hidden_channels = 64;
    double lambda = 2000.0;
};

// Architecture constants: two stride-2 4x4 conv layers down, mirrored
// deconvs up. 4x4/stride-2/pad-1 halves each spatial dim exactly, which a
// 5x5 kernel cannot do on even-sized inputs.
inline constexpr int kCodecKernel = 4;
inline constexpr int kCodecStride = 2;
inline constexpr int kCodecPad = 1;
inline constexpr double kCodecLeakySlope = 0.2;
inline constexpr double kBitsProbFloor = 1e-9;

/// The victim model: encoder/decoder conv stacks plus a factorized
/// per-channel logistic entropy model over the quantized latent.
struct CodecModel {
    ParameterSet encoder;  // conv1.weight/bias, conv2.weight/bias
    ParameterSet decoder;  // deconv1.weight/bias, deconv2.weight/bias
    ParameterSet entropy;  // mu, log_scale (per latent channel)
    double lambda = 0.0;
    int latent_channels = 0;
    int hidden_channels = 0;

    static CodecModel init(const CodecConfig& cfg, std::uint64_t seed);

    /// Throws unless channel counts and entropy shapes are consistent.
    void validate() const;
};

/// Node handles for one mounting of the model parameters on a tape.
struct CodecNodes {
    Graph::NodeId enc_w1, enc_b1, enc_w2, enc_b2;
    Graph::NodeId dec_w1, dec_b1, dec_w2, dec_b2;
    Graph::NodeId mu, log_scale;
};

CodecNodes mount_params(Graph& g, const CodecModel& model, bool requires_grad);

Graph::NodeId build_encode(Graph& g, const CodecNodes& p, Graph::NodeId x);
Graph::NodeId build_quantize(Graph& g, Graph::NodeId y, QuantMode mode, Rng* rng);
Graph::NodeId build_decode(Graph& g, const CodecNodes& p, Graph::NodeId yq);
Graph::NodeId build_forward(Graph& g, const CodecNodes& p, Graph::NodeId x, QuantMode mode,
                            Rng* rng);
Graph::NodeId build_bits(Graph& g, const CodecNodes& p, Graph::NodeId yq);
Graph::NodeId build_rd_loss(Graph& g, const CodecNodes& p, Graph::NodeId x, QuantMode mode,
                            Rng* rng, double lambda);

// Value-only convenience paths (no gradients tracked).
Tensor encode(const CodecModel& model, const Image& x);
Tensor quantize(const Tensor& y, QuantMode mode, Rng* rng = nullptr);
Tensor decode(const CodecModel& model, const Tensor& yq);
Tensor forward_raw(const CodecModel& model, const Tensor& x, QuantMode mode, Rng* rng = nullptr);
Image forward_image(const CodecModel& model, const Image& x, QuantMode mode, Rng* rng = nullptr);
double bits_estimate(const CodecModel& model, const Tensor& yq);
double bpp_from_bits(double bits, int height, int width);
double rd_loss(const CodecModel& model, const Image& x, QuantMode mode, Rng* rng = nullptr);

struct TrainResult {
    CodecModel model;
    std::vector<double> loss_history;
    bool diverged = false;
    int completed_epochs = 0;
};

/// Full-batch gradient descent on the rate-distortion loss with uniform
/// noise quantization. Deterministic given the seed. On divergence returns
/// the last checkpoint with finite loss. lr_halve_patience = 0 disables
/// plateau-based halving.
TrainResult train(const CodecModel& model, const std::vector<Image>& dataset, int epochs,
                  double lr, std::uint64_t seed, int lr_halve_patience = 0);

void save_weights(const CodecModel& model, const std::string& path);
CodecModel load_weights(const std::string& path);

}  // namespace gsmforge
