#pragma once

#include <string>

namespace gsmforge {

/// Renders a standalone SVG 1.1 file from a CSV. Kinds:
///   lcs_trajectory  - trajectory CSV, LCS vs step
///   sweep_heatmap   - sweep summary CSV, mean PSNR over (epsilon, steps)
///   ablation_curve  - ablation summary CSV, mean PSNR vs decay factor
/// Output bytes are deterministic for identical input. A CSV whose header
/// lacks required columns is rejected listing the missing ones; a CSV with
/// a header and no rows yields an axes-only plot.
void emit_plot(const std::string& csv_path, const std::string& kind,
               const std::string& out_path);

}  // namespace gsmforge
