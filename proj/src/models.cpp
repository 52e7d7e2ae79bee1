#include "uinr/models.hpp"

#include <chrono>
#include <cmath>

#include "uinr/errors.hpp"
#include "uinr/evidential.hpp"

namespace uinr {

Variant parse_variant(const std::string& name) {
    if (name == "det") return Variant::Det;
    if (name == "rev") return Variant::Rev;
    if (name == "mcd") return Variant::Mcd;
    if (name == "rmd") return Variant::Rmd;
    throw ConfigError("unknown variant '" + name + "' (expected det, rev, mcd, rmd)");
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::Det: return "det";
        case Variant::Rev: return "rev";
        case Variant::Mcd: return "mcd";
        case Variant::Rmd: return "rmd";
    }
    return "?";
}

void ModelConfig::validate() const {
    if (width < 1) throw ConfigError("model: width must be >= 1");
    if (blocks < 1) throw ConfigError("model: blocks must be >= 1");
    if (variant == Variant::Rmd) {
        if (decoders < 2) throw ConfigError("model: rmd needs >= 2 decoders");
        if (decoder_hidden < 0) throw ConfigError("model: negative decoder_hidden");
    }
    if (variant == Variant::Mcd) {
        if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
            throw ConfigError("model: dropout_rate must be in [0, 1)");
        }
        if (mc_passes < 2) throw ConfigError("model: mc_passes must be >= 2");
    }
}

NetworkShape ModelConfig::shape() const {
    validate();
    NetworkShape s;
    s.width = width;
    s.blocks = blocks;
    s.omega0 = omega0;
    s.omega_hidden = omega_hidden;
    switch (variant) {
        case Variant::Det:
            s.heads = {{0, 1}};
            break;
        case Variant::Rev:
            s.heads = {{0, 4}};
            break;
        case Variant::Mcd:
            s.heads = {{0, 2}};
            s.dropout_block = blocks - 1;
            s.dropout_rate = dropout_rate;
            break;
        case Variant::Rmd:
            s.heads.assign(static_cast<std::size_t>(decoders), HeadSpec{decoder_hidden, 2});
            break;
    }
    return s;
}

ModelConfig default_config(Variant v) {
    ModelConfig c;
    c.variant = v;
    if (v == Variant::Rmd) {
        c.width = 70;
        c.blocks = 4;
        c.decoders = 5;
        c.decoder_hidden = 61;
    }
    return c;
}

MatrixXd coords_matrix(const CoordinateBatch& batch) {
    MatrixXd m(static_cast<Eigen::Index>(batch.points.size()), 3);
    for (std::size_t i = 0; i < batch.points.size(); ++i) {
        m(static_cast<Eigen::Index>(i), 0) = batch.points[i][0];
        m(static_cast<Eigen::Index>(i), 1) = batch.points[i][1];
        m(static_cast<Eigen::Index>(i), 2) = batch.points[i][2];
    }
    return m;
}

PredictBatch det_predict(const Network& net, const MatrixXd& coords) {
    PredictBatch out;
    out.mean = net.forward(coords, ForwardMode::Eval).col(0);
    return out;
}

PredictBatch rev_predict(const Network& net, const MatrixXd& coords) {
    const MatrixXd raw = net.forward(coords, ForwardMode::Eval);
    if (raw.cols() != 4) throw UsageError("rev_predict: network is not an evidential head");
    PredictBatch out;
    const Eigen::Index n = raw.rows();
    out.mean.resize(n);
    out.au.resize(n);
    out.eu.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto m = predictive_moments(
            link(RawEvidentialOutput{raw(i, 0), raw(i, 1), raw(i, 2), raw(i, 3)}));
        out.mean[i] = m.mean;
        out.au[i] = m.au;
        out.eu[i] = m.eu;
    }
    return out;
}

PredictBatch mcd_predict(const Network& net, const MatrixXd& coords, int n,
                         std::uint64_t seed) {
    if (n < 2) throw ConfigError("mcd_predict: need n >= 2 stochastic passes");
    if (net.shape().total_out() != 2) {
        throw UsageError("mcd_predict: network is not a mean/variance head");
    }
    const Eigen::Index rows = coords.rows();
    PredictBatch out;
    if (net.shape().dropout_rate == 0.0) {
        // All passes are identical; the single eval pass equals the Monte Carlo
        // mean exactly and the pass variance is exactly zero.
        const MatrixXd raw = net.forward(coords, ForwardMode::Eval);
        out.mean = raw.col(0);
        out.au.resize(rows);
        for (Eigen::Index i = 0; i < rows; ++i) out.au[i] = softplus(raw(i, 1)) + kLinkEps;
        out.eu = VectorXd::Zero(rows);
        return out;
    }
    MatrixXd preds(rows, n);
    VectorXd au_acc = VectorXd::Zero(rows);
    for (int pass = 0; pass < n; ++pass) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(pass)));
        const MatrixXd raw = net.forward(coords, ForwardMode::Train, &rng);
        preds.col(pass) = raw.col(0);
        for (Eigen::Index i = 0; i < rows; ++i) au_acc[i] += softplus(raw(i, 1)) + kLinkEps;
    }
    out.mean = preds.rowwise().mean();
    out.au = au_acc / static_cast<double>(n);
    out.eu.resize(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        double acc = 0.0;
        for (int pass = 0; pass < n; ++pass) {
            const double c = preds(i, pass) - out.mean[i];
            acc += c * c;
        }
        out.eu[i] = acc / static_cast<double>(n);
    }
    return out;
}

PredictBatch rmd_predict(const Network& net, const MatrixXd& coords) {
    const auto& heads = net.shape().heads;
    const int decoders = static_cast<int>(heads.size());
    if (decoders < 2 || net.shape().total_out() != 2 * decoders) {
        throw UsageError("rmd_predict: network is not a multi-decoder mean/variance model");
    }
    const MatrixXd raw = net.forward(coords, ForwardMode::Eval);
    const Eigen::Index rows = raw.rows();
    PredictBatch out;
    out.mean.resize(rows);
    out.au.resize(rows);
    out.eu.resize(rows);
    const double dd = static_cast<double>(decoders);
    for (Eigen::Index i = 0; i < rows; ++i) {
        double msum = 0.0, asum = 0.0;
        for (int d = 0; d < decoders; ++d) {
            msum += raw(i, 2 * d);
            asum += softplus(raw(i, 2 * d + 1)) + kLinkEps;
        }
        const double m = msum / dd;
        double var = 0.0;
        for (int d = 0; d < decoders; ++d) {
            const double c = raw(i, 2 * d) - m;
            var += c * c;
        }
        out.mean[i] = m;
        out.au[i] = asum / dd;
        out.eu[i] = var / dd;
    }
    return out;
}

PredictBatch predict(const ModelConfig& config, const Network& net, const MatrixXd& coords,
                     std::uint64_t seed) {
    switch (config.variant) {
        case Variant::Det: return det_predict(net, coords);
        case Variant::Rev: return rev_predict(net, coords);
        case Variant::Mcd: return mcd_predict(net, coords, config.mc_passes, seed);
        case Variant::Rmd: return rmd_predict(net, coords);
    }
    throw UsageError("predict: unknown variant");
}

PredictionField reconstruct(const ModelConfig& config, const Network& net,
                            const NormParams& norm, Dims dims, std::uint64_t seed,
                            Spacing spacing) {
    const std::size_t total = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    // Rough memory gate: coordinates plus three output fields in doubles.
    const std::size_t need = total * sizeof(double) * 8;
    constexpr std::size_t kBudget = std::size_t{8} * 1024 * 1024 * 1024;
    if (need > kBudget) {
        throw UsageError("reconstruct: dims need " + std::to_string(need) +
                         " bytes, over the " + std::to_string(kBudget) + " byte budget");
    }
    const auto t0 = std::chrono::steady_clock::now();
    const CoordinateBatch grid = grid_coordinates(dims);
    std::vector<double> mean(total), au, eu;
    const bool has_unc = config.variant != Variant::Det;
    if (has_unc) {
        au.resize(total);
        eu.resize(total);
    }
    constexpr std::size_t kChunk = 65536;
    for (std::size_t start = 0; start < total; start += kChunk) {
        const std::size_t count = std::min(kChunk, total - start);
        MatrixXd coords(static_cast<Eigen::Index>(count), 3);
        for (std::size_t i = 0; i < count; ++i) {
            coords(static_cast<Eigen::Index>(i), 0) = grid.points[start + i][0];
            coords(static_cast<Eigen::Index>(i), 1) = grid.points[start + i][1];
            coords(static_cast<Eigen::Index>(i), 2) = grid.points[start + i][2];
        }
        const PredictBatch pb = predict(config, net, coords, seed);
        for (std::size_t i = 0; i < count; ++i) {
            mean[start + i] = norm.denormalize(pb.mean[static_cast<Eigen::Index>(i)]);
            if (has_unc) {
                au[start + i] = pb.au[static_cast<Eigen::Index>(i)];
                eu[start + i] = pb.eu[static_cast<Eigen::Index>(i)];
            }
        }
    }
    const auto t1 = std::chrono::steady_clock::now();
    PredictionField field{VolumeGrid(dims, std::move(mean), spacing), std::nullopt,
                          std::nullopt,
                          std::chrono::duration<double>(t1 - t0).count()};
    if (has_unc) {
        field.au = VolumeGrid(dims, std::move(au), spacing);
        field.eu = VolumeGrid(dims, std::move(eu), spacing);
    }
    return field;
}

}  // namespace uinr
