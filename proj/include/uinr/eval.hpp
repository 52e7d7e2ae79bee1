#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "uinr/volume.hpp"

namespace uinr {

/// 20*log10(range/RMSE) with range = gt.max - gt.min; +infinity when MSE == 0
/// (serialized as the "exact" sentinel).
double psnr(const VolumeGrid& gt, const VolumeGrid& pred);

/// Global sample Pearson over all voxels; throws on constant input
/// (evaluation must not mask degeneracy, unlike the in-training convention).
double corr_fields(const VolumeGrid& a, const VolumeGrid& b);

VolumeGrid abs_error_field(const VolumeGrid& gt, const VolumeGrid& pred);
VolumeGrid squared_error_field(const VolumeGrid& gt, const VolumeGrid& pred);

/// Voxel-mean Gaussian NLL; variances clamped at 1e-12 with the clamp count
/// reported through `clamped`.
double nll_gaussian_field(const VolumeGrid& gt, const VolumeGrid& mean,
                          const VolumeGrid& var, long* clamped = nullptr);

struct EvalReport {
    double psnr_db = 0.0;  // +inf means exact
    double corr_eu_error = 0.0;
    double corr_au_locvar = 0.0;
    double corr_au_interp = 0.0;
    double nll_eu = 0.0;
    double nll_au = 0.0;
    long clamped_eu = 0;
    long clamped_au = 0;
    double reconstruction_seconds = 0.0;
    nlohmann::json config_echo;

    nlohmann::json to_json() const;
    static EvalReport from_json(const nlohmann::json& j);
    std::string csv_row() const;
    static std::string csv_header();
};

/// Full Table-style metric set. `locvar_window` and `interp_factors` select the
/// AU reference fields; `squared_error` switches the EU reference from |err| to err^2.
EvalReport evaluate(const VolumeGrid& gt, const VolumeGrid& mean, const VolumeGrid& au,
                    const VolumeGrid& eu, Factors locvar_window, Factors interp_factors,
                    bool squared_error = false);

struct AblationDeltas {
    std::map<std::string, double> deltas;  // with - without, per metric
    bool regularized_dominates = false;    // all three correlations improved

    nlohmann::json to_json() const;
};

/// Signed metric deltas between a regularized and an unregularized run.
AblationDeltas ablation_compare(const EvalReport& with_reg, const EvalReport& without_reg);

}  // namespace uinr
