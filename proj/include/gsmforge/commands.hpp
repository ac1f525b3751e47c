#pragma once

#include <string>
#include <vector>

#include "gsmforge/config.hpp"

namespace gsmforge {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit codes: 0 success, 1 config error (thrown as exceptions, mapped by
// the CLI), 2 partial per-pair failures.

int cmd_train(const Config& cfg);
int cmd_attack(const Config& cfg, const std::string& weights_path);
int cmd_sweep(const Config& cfg, const std::string& weights_path);
int cmd_ablate_k(const Config& cfg, const std::string& weights_path, std::vector<double> grid);
int cmd_defense(const Config& cfg, const std::string& weights_path);

/// Bounded by the GSM_FORGE_THREADS environment variable when set.
int worker_count(std::size_t tasks);

}  // namespace gsmforge
