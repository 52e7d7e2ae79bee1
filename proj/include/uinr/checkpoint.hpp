#pragma once

#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "uinr/models.hpp"
#include "uinr/network.hpp"

namespace uinr {

nlohmann::json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json norm_params_to_json(const NormParams& np);
NormParams norm_params_from_json(const nlohmann::json& j);

struct TrainState {
    AdamState adam;
    int next_epoch = 0;
};

/// Versioned binary checkpoint: header + JSON descriptor + little-endian f32
/// parameter payload in declaration order, with an optional optimizer-state
/// section for resumption. A JSON mirror is written next to the binary.
struct Checkpoint {
    ModelConfig config;
    NormParams norm;
    Dims dims{1, 1, 1};
    Spacing spacing{1.0, 1.0, 1.0};
    VectorXd params;
    std::optional<TrainState> state;
    nlohmann::json snapshot;  // resolved run configuration, free-form
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Builds the network described by the checkpoint and loads its parameters.
Network restore_network(const Checkpoint& ckpt);

}  // namespace uinr
