#include "uinr/training.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "uinr/errors.hpp"

namespace uinr {

using nlohmann::json;

namespace {
constexpr std::uint64_t kInitStream = 0xfeed0001;
constexpr std::uint64_t kShuffleStream = 0xfeed0002;
constexpr std::uint64_t kDropoutStream = 0xfeed0003;

void fisher_yates(std::vector<std::uint32_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::swap(idx[i - 1], idx[rng.below(i)]);
    }
}

json resolved_snapshot(const ModelConfig& model, const TrainConfig& cfg) {
    json j;
    j["model"] = model_config_to_json(model);
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["seed"] = cfg.seed;
    j["lr"] = {{"base_lr", cfg.lr.base_lr}, {"decay", cfg.lr.decay},
               {"step_size", cfg.lr.step_size}};
    j["weights"] = {{"lambda1", cfg.weights.lambda1}, {"lambda2", cfg.weights.lambda2},
                    {"lambda3", cfg.weights.lambda3}, {"delta", cfg.weights.delta},
                    {"rmd_k", cfg.weights.rmd_k}};
    j["targets"] = {{"gamma_t", cfg.targets.gamma_t}, {"alpha_t", cfg.targets.alpha_t},
                    {"beta_t", cfg.targets.beta_t}};
    j["norm"] = {{"lo", cfg.norm_lo}, {"hi", cfg.norm_hi}};
    j["checkpoint_every"] = cfg.checkpoint_every;
    j["deterministic"] = cfg.deterministic;
    j["quantize_f32"] = cfg.quantize_f32;
    return j;
}

struct RunState {
    Network net;
    AdamState adam;
    int start_epoch = 0;
};

TrainResult run_loop(const ModelConfig& model, const VolumeGrid& volume,
                     const TrainConfig& cfg, RunState state) {
    const auto [norm_vol, norm] = normalize(volume, cfg.norm_lo, cfg.norm_hi);
    const CoordinateBatch grid = grid_coordinates(norm_vol);
    const VolumeGrid grad_field = gradient_magnitude(norm_vol);
    const std::size_t total = grid.points.size();

    const bool use_files = !cfg.out_dir.empty();
    std::ofstream log_stream;
    if (use_files) {
        std::filesystem::create_directories(cfg.out_dir);
        std::ofstream snap(cfg.out_dir + "/resolved_config.json");
        snap << resolved_snapshot(model, cfg).dump(2) << "\n";
        log_stream.open(cfg.out_dir + "/train_log.jsonl",
                        state.start_epoch > 0 ? std::ios::app : std::ios::out);
    }

    TrainResult result{model, std::move(state.net), norm, volume.dims(), volume.spacing(), {}};
    AdamState adam = std::move(state.adam);

    auto write_ckpt = [&](const std::string& name, int next_epoch) {
        if (!use_files) return;
        Checkpoint ckpt;
        ckpt.config = model;
        ckpt.norm = norm;
        ckpt.dims = volume.dims();
        ckpt.spacing = volume.spacing();
        ckpt.params = result.net.params();
        ckpt.state = TrainState{adam, next_epoch};
        ckpt.snapshot = resolved_snapshot(model, cfg);
        save_checkpoint(cfg.out_dir + "/" + name, ckpt);
    };

    std::vector<std::uint32_t> perm(total);

    for (int epoch = state.start_epoch; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = cfg.lr.lr_at(epoch);
        // The permutation is a pure function of (seed, epoch) so resumed runs
        // replay the exact batch order of an uninterrupted run.
        for (std::size_t i = 0; i < total; ++i) perm[i] = static_cast<std::uint32_t>(i);
        Rng shuffle_rng(derive_seed(cfg.seed, kShuffleStream, static_cast<std::uint64_t>(epoch)));
        fisher_yates(perm, shuffle_rng);

        double total_acc = 0.0;
        std::map<std::string, double> comp_acc;
        std::map<std::string, double> weights_used;
        std::size_t samples_seen = 0;
        int phase = 1;
        int batch_index = 0;

        for (std::size_t start = 0; start < total; start += cfg.batch_size, ++batch_index) {
            const std::size_t count =
                std::min(static_cast<std::size_t>(cfg.batch_size), total - start);
            if (count < 2) continue;  // Pearson and variance terms need >= 2 samples
            MatrixXd coords(static_cast<Eigen::Index>(count), 3);
            VectorXd y(static_cast<Eigen::Index>(count));
            VectorXd g(static_cast<Eigen::Index>(count));
            for (std::size_t i = 0; i < count; ++i) {
                const std::uint32_t p = perm[start + i];
                const auto idx = static_cast<Eigen::Index>(i);
                coords(idx, 0) = grid.points[p][0];
                coords(idx, 1) = grid.points[p][1];
                coords(idx, 2) = grid.points[p][2];
                y[idx] = grid.targets[p];
                g[idx] = grad_field.values()[p];
            }

            Rng drop_rng(derive_seed(cfg.seed, kDropoutStream,
                                     static_cast<std::uint64_t>(epoch) * 1000003ULL +
                                         static_cast<std::uint64_t>(batch_index)));
            ForwardCache cache;
            const MatrixXd raw =
                result.net.forward(coords, ForwardMode::Train, &drop_rng, &cache);

            MatrixXd d_raw;
            BatchLossReport rep;
            switch (model.variant) {
                case Variant::Det:
                    rep = det_total(raw, y, &d_raw);
                    break;
                case Variant::Rev:
                    rep = rev_total(raw, y, g, cfg.weights, cfg.targets, epoch, cfg.epochs,
                                    &d_raw);
                    break;
                case Variant::Mcd:
                    rep = mcd_total(raw, y, cfg.weights, &d_raw);
                    break;
                case Variant::Rmd:
                    rep = rmd_total(raw, model.decoders, y, cfg.weights, epoch, cfg.epochs,
                                    &d_raw);
                    break;
            }
            if (!std::isfinite(rep.total)) {
                std::string bad = "total";
                for (const auto& [name, value] : rep.components) {
                    if (!std::isfinite(value)) {
                        bad = name;
                        break;
                    }
                }
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                                   " batch " + std::to_string(batch_index) + " component " +
                                   bad + "; last cadence checkpoint retained");
            }
            const VectorXd grads = result.net.backward(cache, d_raw);
            adam_step(result.net.params(), grads, adam, lr, cfg.quantize_f32);

            phase = rep.phase;
            weights_used = rep.weights;
            const double wgt = static_cast<double>(count);
            total_acc += rep.total * wgt;
            for (const auto& [name, value] : rep.components) comp_acc[name] += value * wgt;
            samples_seen += count;
        }

        TrainLogRecord rec;
        rec.epoch = epoch;
        rec.phase = phase;
        rec.lr = lr;
        rec.total = total_acc / static_cast<double>(samples_seen);
        for (auto& [name, value] : comp_acc) {
            rec.components[name] = value / static_cast<double>(samples_seen);
        }
        rec.weights = weights_used;
        rec.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (log_stream.is_open()) log_stream << rec.to_json().dump() << "\n" << std::flush;
        result.log.push_back(std::move(rec));

        if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 &&
            epoch + 1 < cfg.epochs) {
            write_ckpt("checkpoint_epoch_" + std::to_string(epoch + 1) + ".bin", epoch + 1);
        }
    }
    write_ckpt("model.bin", cfg.epochs);
    return result;
}
}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
    if (!(norm_hi > norm_lo)) throw ConfigError("train: norm_hi must exceed norm_lo");
    weights.validate();
}

LossWeights default_weights(Variant v) {
    LossWeights w;
    if (v == Variant::Mcd || v == Variant::Rmd) {
        w.lambda1 = 0.001;
        // Max weight of the rmd distribution-KL regularizer. Its gradients are
        // normalized by the (often tiny) batch EU mass, so even modest weights
        // overwhelm the fidelity terms; 1e-4 aligns uncertainty without
        // sinking reconstruction quality.
        w.lambda2 = 0.0001;
    }
    return w;
}

json TrainLogRecord::to_json() const {
    json j;
    j["epoch"] = epoch;
    j["phase"] = phase;
    j["lr"] = lr;
    j["total"] = total;
    j["components"] = components;
    j["weights"] = weights;
    j["seconds"] = seconds;
    if (!note.empty()) j["note"] = note;
    return j;
}

TrainResult train(const ModelConfig& model, const VolumeGrid& volume,
                  const TrainConfig& config) {
    model.validate();
    config.validate();
    RunState state{Network(model.shape()), AdamState::zeros(model.parameter_count()), 0};
    Rng init_rng(derive_seed(config.seed, kInitStream));
    state.net.init(init_rng);
    if (config.quantize_f32) {
        for (Eigen::Index i = 0; i < state.net.params().size(); ++i) {
            state.net.params()[i] =
                static_cast<double>(static_cast<float>(state.net.params()[i]));
        }
    }
    return run_loop(model, volume, config, std::move(state));
}

TrainResult resume(const Checkpoint& ckpt, const std::optional<ModelConfig>& expect,
                   const VolumeGrid& volume, const TrainConfig& config) {
    config.validate();
    if (expect && !(expect->shape() == ckpt.config.shape())) {
        throw ConfigError("resume: architecture mismatch, expected " +
                          model_config_to_json(*expect).dump() + " but checkpoint holds " +
                          model_config_to_json(ckpt.config).dump());
    }
    if (!ckpt.state) throw ConfigError("resume: checkpoint carries no optimizer state");
    if (ckpt.state->next_epoch >= config.epochs) {
        TrainResult result{ckpt.config, restore_network(ckpt), ckpt.norm,
                           ckpt.dims, ckpt.spacing, {}};
        TrainLogRecord rec;
        rec.epoch = ckpt.state->next_epoch;
        rec.note = "resume past final epoch " + std::to_string(config.epochs) + "; no-op";
        result.log.push_back(std::move(rec));
        return result;
    }
    RunState state{restore_network(ckpt), ckpt.state->adam, ckpt.state->next_epoch};
    return run_loop(ckpt.config, volume, config, std::move(state));
}

}  // namespace uinr
