#pragma once

#include "gsmforge/attack.hpp"
#include "gsmforge/graph.hpp"
#include "gsmforge/image.hpp"

namespace gsmforge {

enum class JpegRounding { Hard, Soft };

struct JpegConfig {
    int quality = 90;
    JpegRounding rounding = JpegRounding::Hard;
    double soft_sharpness = 1.0;
    void validate() const;
};

/// JPEG-style frequency-quantization round trip: BT.601 full-range YCbCr,
/// per-8x8-block DCT, quality-scaled Annex-K table quantization, inverse.
/// No chroma subsampling, no entropy coding. Hard rounding is
/// round-half-away-from-zero; soft rounding is the smooth surrogate
/// x - sin(2*pi*x)/(2*pi*sharpness), exact at integers.
Image jpeg_roundtrip(const Image& x, const JpegConfig& cfg);

/// Differentiable tape version. With hard rounding this is rejected when x
/// tracks gradients.
Graph::NodeId build_jpeg_roundtrip(Graph& g, Graph::NodeId x, const JpegConfig& cfg);

/// run_attack with the soft JPEG surrogate composed in front of the codec:
/// the objective differentiates through jpeg(soft) -> f. Evaluation of the
/// result should apply jpeg_roundtrip(hard) before the real codec.
AttackResult attack_through_defense(const CodecModel& model, const GsmPair& pair,
                                    const AttackConfig& cfg_attack, const JpegConfig& cfg_jpeg,
                                    std::uint64_t pair_index = 0);

/// Quality-scaled quantization table (64 entries, row-major), luma or
/// chroma. Exposed for tests.
std::vector<double> jpeg_quant_table(int quality, bool luma);

}  // namespace gsmforge
