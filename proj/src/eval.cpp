#include "uinr/eval.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "uinr/errors.hpp"

namespace uinr {

using nlohmann::json;

namespace {
constexpr double kVarClamp = 1e-12;
constexpr double kHalfLog2Pi = 0.9189385332046727;

void require_same_dims(const VolumeGrid& a, const VolumeGrid& b, const char* op) {
    if (a.dims() != b.dims()) {
        throw UsageError(std::string(op) + ": volume dimension mismatch");
    }
}
}  // namespace

double psnr(const VolumeGrid& gt, const VolumeGrid& pred) {
    require_same_dims(gt, pred, "psnr");
    const double range = gt.max_value() - gt.min_value();
    double mse_acc = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const double d = gt.values()[i] - pred.values()[i];
        mse_acc += d * d;
    }
    mse_acc /= static_cast<double>(gt.size());
    if (mse_acc == 0.0) return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(range / std::sqrt(mse_acc));
}

double corr_fields(const VolumeGrid& a, const VolumeGrid& b) {
    require_same_dims(a, b, "corr_fields");
    const std::size_t n = a.size();
    if (n < 2) throw UsageError("corr_fields: need at least 2 voxels");
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a.values()[i];
        mb += b.values()[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double u = a.values()[i] - ma;
        const double w = b.values()[i] - mb;
        sab += u * w;
        sa += u * u;
        sb += w * w;
    }
    if (sa == 0.0 || sb == 0.0) {
        throw UsageError("corr_fields: constant input field, correlation undefined");
    }
    return sab / std::sqrt(sa * sb);
}

VolumeGrid abs_error_field(const VolumeGrid& gt, const VolumeGrid& pred) {
    require_same_dims(gt, pred, "abs_error_field");
    std::vector<double> out(gt.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::abs(gt.values()[i] - pred.values()[i]);
    }
    return VolumeGrid(gt.dims(), std::move(out), gt.spacing());
}

VolumeGrid squared_error_field(const VolumeGrid& gt, const VolumeGrid& pred) {
    require_same_dims(gt, pred, "squared_error_field");
    std::vector<double> out(gt.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double d = gt.values()[i] - pred.values()[i];
        out[i] = d * d;
    }
    return VolumeGrid(gt.dims(), std::move(out), gt.spacing());
}

double nll_gaussian_field(const VolumeGrid& gt, const VolumeGrid& mean,
                          const VolumeGrid& var, long* clamped) {
    require_same_dims(gt, mean, "nll_gaussian_field");
    require_same_dims(gt, var, "nll_gaussian_field");
    long clamp_count = 0;
    double acc = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        double s2 = var.values()[i];
        if (s2 < kVarClamp) {
            s2 = kVarClamp;
            ++clamp_count;
        }
        const double r = gt.values()[i] - mean.values()[i];
        acc += kHalfLog2Pi + 0.5 * std::log(s2) + r * r / (2.0 * s2);
    }
    if (clamped) *clamped = clamp_count;
    return acc / static_cast<double>(gt.size());
}

json EvalReport::to_json() const {
    json j;
    if (std::isinf(psnr_db)) {
        j["psnr_db"] = "exact";
    } else {
        j["psnr_db"] = psnr_db;
    }
    j["corr_eu_error"] = corr_eu_error;
    j["corr_au_locvar"] = corr_au_locvar;
    j["corr_au_interp"] = corr_au_interp;
    j["nll_eu"] = nll_eu;
    j["nll_au"] = nll_au;
    j["clamped_eu"] = clamped_eu;
    j["clamped_au"] = clamped_au;
    j["reconstruction_seconds"] = reconstruction_seconds;
    if (!config_echo.is_null()) j["config"] = config_echo;
    return j;
}

EvalReport EvalReport::from_json(const json& j) {
    EvalReport r;
    if (j.at("psnr_db").is_string()) {
        r.psnr_db = std::numeric_limits<double>::infinity();
    } else {
        r.psnr_db = j.at("psnr_db").get<double>();
    }
    r.corr_eu_error = j.at("corr_eu_error").get<double>();
    r.corr_au_locvar = j.at("corr_au_locvar").get<double>();
    r.corr_au_interp = j.at("corr_au_interp").get<double>();
    r.nll_eu = j.at("nll_eu").get<double>();
    r.nll_au = j.at("nll_au").get<double>();
    r.clamped_eu = j.value("clamped_eu", 0L);
    r.clamped_au = j.value("clamped_au", 0L);
    r.reconstruction_seconds = j.value("reconstruction_seconds", 0.0);
    if (j.contains("config")) r.config_echo = j["config"];
    return r;
}

std::string EvalReport::csv_header() {
    return "psnr_db,corr_eu_error,corr_au_locvar,corr_au_interp,nll_eu,nll_au,"
           "reconstruction_seconds";
}

std::string EvalReport::csv_row() const {
    std::ostringstream os;
    if (std::isinf(psnr_db)) {
        os << "exact";
    } else {
        os << psnr_db;
    }
    os << "," << corr_eu_error << "," << corr_au_locvar << "," << corr_au_interp << ","
       << nll_eu << "," << nll_au << "," << reconstruction_seconds;
    return os.str();
}

EvalReport evaluate(const VolumeGrid& gt, const VolumeGrid& mean, const VolumeGrid& au,
                    const VolumeGrid& eu, Factors locvar_window, Factors interp_factors,
                    bool squared_error) {
    EvalReport rep;
    rep.psnr_db = psnr(gt, mean);
    const VolumeGrid err =
        squared_error ? squared_error_field(gt, mean) : abs_error_field(gt, mean);
    rep.corr_eu_error = corr_fields(eu, err);
    rep.corr_au_locvar = corr_fields(au, local_variance(gt, locvar_window));
    rep.corr_au_interp = corr_fields(au, interpolation_error_field(gt, interp_factors));
    rep.nll_eu = nll_gaussian_field(gt, mean, eu, &rep.clamped_eu);
    rep.nll_au = nll_gaussian_field(gt, mean, au, &rep.clamped_au);
    return rep;
}

json AblationDeltas::to_json() const {
    json j;
    j["deltas"] = deltas;
    j["regularized_dominates"] = regularized_dominates;
    return j;
}

AblationDeltas ablation_compare(const EvalReport& with_reg, const EvalReport& without_reg) {
    if (!with_reg.config_echo.is_null() && !without_reg.config_echo.is_null()) {
        json a = with_reg.config_echo;
        json b = without_reg.config_echo;
        a.erase("weights");
        b.erase("weights");
        if (a != b) {
            throw UsageError("ablation_compare: runs differ beyond regularizer weights");
        }
    }
    AblationDeltas d;
    d.deltas["psnr_db"] = with_reg.psnr_db - without_reg.psnr_db;
    d.deltas["corr_eu_error"] = with_reg.corr_eu_error - without_reg.corr_eu_error;
    d.deltas["corr_au_locvar"] = with_reg.corr_au_locvar - without_reg.corr_au_locvar;
    d.deltas["corr_au_interp"] = with_reg.corr_au_interp - without_reg.corr_au_interp;
    d.deltas["nll_eu"] = with_reg.nll_eu - without_reg.nll_eu;
    d.deltas["nll_au"] = with_reg.nll_au - without_reg.nll_au;
    d.regularized_dominates = d.deltas["corr_eu_error"] > 0.0 &&
                              d.deltas["corr_au_locvar"] > 0.0 &&
                              d.deltas["corr_au_interp"] > 0.0;
    return d;
}

}  // namespace uinr
