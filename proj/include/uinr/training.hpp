#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "uinr/checkpoint.hpp"
#include "uinr/losses.hpp"
#include "uinr/models.hpp"
#include "uinr/volume.hpp"

namespace uinr {

struct TrainConfig {
    int epochs = 300;
    int batch_size = 4096;
    std::uint64_t seed = 1;
    LrSchedule lr;
    LossWeights weights;
    EvidentialTargets targets;
    double norm_lo = -1.0;
    double norm_hi = 1.0;
    int checkpoint_every = 50;
    bool deterministic = true;  // serial gradient reduction, reproducible streams
    bool quantize_f32 = true;   // keep parameters on the float32 grid
    std::string out_dir;        // empty: keep everything in memory

    void validate() const;
};

/// Paper defaults: lambda1 is 0.001 for the Gaussian-NLL variants.
LossWeights default_weights(Variant v);

struct TrainLogRecord {
    int epoch = 0;
    int phase = 1;
    double lr = 0.0;
    double total = 0.0;
    std::map<std::string, double> components;
    std::map<std::string, double> weights;
    double seconds = 0.0;
    std::string note;  // e.g. resume-past-end warning

    nlohmann::json to_json() const;
};

struct TrainResult {
    ModelConfig config;
    Network net;
    NormParams norm;
    Dims dims{1, 1, 1};
    Spacing spacing{1.0, 1.0, 1.0};
    std::vector<TrainLogRecord> log;
};

/// Epoch-driven training over every grid coordinate of `volume`, reshuffled
/// per epoch. Writes checkpoints, a line-delimited JSON log, and a resolved
/// config snapshot when out_dir is set. Aborts on non-finite loss with the
/// last cadence checkpoint left intact.
TrainResult train(const ModelConfig& model, const VolumeGrid& volume,
                  const TrainConfig& config);

/// Continues training from a checkpoint with optimizer state. When `expect` is
/// given, the checkpoint architecture must match it. In deterministic mode the
/// continued trajectory is identical to an uninterrupted run.
TrainResult resume(const Checkpoint& ckpt, const std::optional<ModelConfig>& expect,
                   const VolumeGrid& volume, const TrainConfig& config);

}  // namespace uinr
