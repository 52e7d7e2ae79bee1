#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "uinr/network.hpp"
#include "uinr/volume.hpp"

namespace uinr {

enum class Variant { Det, Rev, Mcd, Rmd };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);

struct ModelConfig {
    Variant variant = Variant::Rev;
    int width = 100;
    int blocks = 3;
    int decoders = 5;        // rmd only
    int decoder_hidden = 61; // rmd only; sized so the checkpoint lands near 249 KB
    double dropout_rate = 0.1;  // mcd only
    int mc_passes = 20;         // mcd only
    double omega0 = 30.0;
    double omega_hidden = 1.0;

    void validate() const;
    NetworkShape shape() const;
    std::size_t parameter_count() const { return shape().parameter_count(); }
};

/// Paper-matched defaults per variant (rmd uses width 70 with a deeper encoder).
ModelConfig default_config(Variant v);

/// Per-point predictions over a batch.
struct PredictBatch {
    VectorXd mean;
    VectorXd au;  // empty for det
    VectorXd eu;  // empty for det
};

MatrixXd coords_matrix(const CoordinateBatch& batch);

PredictBatch det_predict(const Network& net, const MatrixXd& coords);

/// Single deterministic pass; link + closed-form moments per point.
PredictBatch rev_predict(const Network& net, const MatrixXd& coords);

/// n stochastic passes with dropout active; pass i uses the substream
/// derive_seed(seed, i), so results are reproducible for any partitioning.
PredictBatch mcd_predict(const Network& net, const MatrixXd& coords, int n,
                         std::uint64_t seed);

/// Single deterministic pass over all decoder heads.
PredictBatch rmd_predict(const Network& net, const MatrixXd& coords);

PredictBatch predict(const ModelConfig& config, const Network& net, const MatrixXd& coords,
                     std::uint64_t seed = 0);

/// Co-registered mean/AU/EU volumes; AU/EU absent for det.
struct PredictionField {
    VolumeGrid mean;
    std::optional<VolumeGrid> au;  // normalized units^2
    std::optional<VolumeGrid> eu;  // normalized units^2
    double seconds = 0.0;
};

/// Evaluates the model over grid_coordinates(dims); mean is denormalized through
/// `norm`, AU/EU stay in normalized units^2.
PredictionField reconstruct(const ModelConfig& config, const Network& net,
                            const NormParams& norm, Dims dims, std::uint64_t seed = 0,
                            Spacing spacing = {1.0, 1.0, 1.0});

}  // namespace uinr
