#pragma once

#include <nlohmann/json_fwd.hpp>

#include <string>

#include "tripnet/nn.hpp"

namespace tripnet {

inline constexpr int kCheckpointFormatVersion = 1;

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

/// Checkpoint JSON: {format_version, config, params (flat arrays keyed by
/// canonical name), norm_stats, run_config echo}. Doubles round-trip
/// bitwise through the shortest-representation serializer.
void save_checkpoint(const ModelConfig& config, ModelParams& params, const std::string& path,
                     const nlohmann::json& run_config);

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
};

/// Strict load: version, parameter names and lengths must all match.
Checkpoint load_checkpoint(const std::string& path);

} // namespace tripnet
