#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>

#include "uinr/errors.hpp"
#include "uinr/eval.hpp"
#include "uinr/lcp.hpp"
#include "uinr/models.hpp"
#include "uinr/training.hpp"

using nlohmann::json;
using namespace uinr;

namespace {

// Exit codes: 0 ok, 2 config, 3 io, 4 numeric, 5 contract violation.
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitContract = 5;

template <typename T>
std::array<T, 3> parse_triplet(const std::string& text, const char* what) {
    std::array<T, 3> out;
    std::stringstream ss(text);
    std::string part;
    int i = 0;
    while (std::getline(ss, part, ',')) {
        if (i >= 3) throw ConfigError(std::string(what) + ": expected 3 values, got more");
        try {
            if constexpr (std::is_integral_v<T>) {
                out[i] = static_cast<T>(std::stoll(part));
            } else {
                out[i] = static_cast<T>(std::stod(part));
            }
        } catch (const std::exception&) {
            throw ConfigError(std::string(what) + ": cannot parse '" + part + "'");
        }
        ++i;
    }
    if (i == 1) {
        out[1] = out[0];
        out[2] = out[0];
    } else if (i != 3) {
        throw ConfigError(std::string(what) + ": expected 1 or 3 comma-separated values");
    }
    return out;
}

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file " + path + ": " + e.what());
    }
}

// CLI flags override config-file values, which override defaults.
template <typename T>
void merge(const json& j, const std::string& key, T& value, const CLI::Option* opt) {
    if (opt && opt->count() > 0) return;
    if (!j.contains(key)) return;
    try {
        value = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
    }
}

// Volume input: a raw file with explicit dims/dtype, or a written volume
// with its JSON sidecar when dims are not given.
struct VolumeSpec {
    std::string path;
    std::string dims;
    std::string dtype = "f32le";
    std::string spacing = "1";
};

VolumeGrid load_input_volume(const VolumeSpec& spec) {
    if (spec.path.empty()) throw ConfigError("no input volume given");
    if (spec.dims.empty()) return read_volume(spec.path).first;
    return load_raw(spec.path, parse_triplet<int>(spec.dims, "--dims"),
                    parse_dtype(spec.dtype), parse_triplet<double>(spec.spacing, "--spacing"));
}

void add_volume_options(CLI::App* cmd, VolumeSpec& spec) {
    cmd->add_option("--volume", spec.path, "input volume (raw with --dims, else .vol)");
    cmd->add_option("--dims", spec.dims, "raw volume dims, e.g. 64,64,64");
    cmd->add_option("--dtype", spec.dtype, "raw dtype: f32le, f64le, u8, u16le");
    cmd->add_option("--spacing", spec.spacing, "grid spacing, one value or x,y,z");
}

void write_field(const std::string& path, const VolumeGrid& vol, const std::string& kind,
                 std::optional<NormParams> norm = std::nullopt,
                 std::optional<double> isovalue = std::nullopt) {
    VolumeMeta meta;
    meta.dims = vol.dims();
    meta.spacing = vol.spacing();
    meta.field_kind = kind;
    meta.norm = norm;
    meta.isovalue = isovalue;
    write_volume(path, vol, meta);
    std::cout << "wrote " << kind << ": " << path << "\n";
}

int cmd_train(const VolumeSpec& vol_spec, const std::string& config_path,
              const std::string& variant_name_str, const std::string& out_dir,
              const std::string& resume_from, ModelConfig model, TrainConfig train_cfg,
              bool weights_touched, const CLI::App* cmd) {
    const json j = load_config_file(config_path);
    std::string variant = variant_name_str;
    merge(j, "variant", variant, cmd->get_option("--variant"));
    model.variant = parse_variant(variant);

    merge(j, "width", model.width, cmd->get_option("--width"));
    merge(j, "blocks", model.blocks, cmd->get_option("--blocks"));
    merge(j, "decoders", model.decoders, cmd->get_option("--decoders"));
    merge(j, "decoder_hidden", model.decoder_hidden, cmd->get_option("--decoder-hidden"));
    merge(j, "dropout_rate", model.dropout_rate, cmd->get_option("--dropout-rate"));
    merge(j, "mc_passes", model.mc_passes, cmd->get_option("--mc-passes"));
    // Per-variant architecture defaults apply when nothing was requested.
    {
        const ModelConfig defaults = default_config(model.variant);
        if (cmd->get_option("--width")->count() == 0 && !j.contains("width")) {
            model.width = defaults.width;
        }
        if (cmd->get_option("--blocks")->count() == 0 && !j.contains("blocks")) {
            model.blocks = defaults.blocks;
        }
    }

    merge(j, "epochs", train_cfg.epochs, cmd->get_option("--epochs"));
    merge(j, "batch_size", train_cfg.batch_size, cmd->get_option("--batch-size"));
    merge(j, "seed", train_cfg.seed, cmd->get_option("--seed"));
    merge(j, "lr", train_cfg.lr.base_lr, cmd->get_option("--lr"));
    merge(j, "lr_decay", train_cfg.lr.decay, cmd->get_option("--lr-decay"));
    merge(j, "lr_step", train_cfg.lr.step_size, cmd->get_option("--lr-step"));
    merge(j, "checkpoint_every", train_cfg.checkpoint_every,
          cmd->get_option("--checkpoint-every"));

    if (!weights_touched) train_cfg.weights = default_weights(model.variant);
    merge(j, "lambda1", train_cfg.weights.lambda1, cmd->get_option("--lambda1"));
    merge(j, "lambda2", train_cfg.weights.lambda2, cmd->get_option("--lambda2"));
    merge(j, "lambda3", train_cfg.weights.lambda3, cmd->get_option("--lambda3"));
    merge(j, "delta", train_cfg.weights.delta, cmd->get_option("--delta"));

    VolumeSpec vspec = vol_spec;
    merge(j, "volume", vspec.path, cmd->get_option("--volume"));
    merge(j, "dims", vspec.dims, cmd->get_option("--dims"));
    merge(j, "dtype", vspec.dtype, cmd->get_option("--dtype"));

    train_cfg.out_dir = out_dir;
    if (train_cfg.out_dir.empty()) throw ConfigError("train: --out directory is required");

    const VolumeGrid volume = load_input_volume(vspec);
    TrainResult result = [&] {
        if (!resume_from.empty()) {
            // Only enforce an architecture expectation when one was requested.
            std::optional<ModelConfig> expect;
            if (cmd->get_option("--variant")->count() > 0 || j.contains("variant")) {
                expect = model;
            }
            const Checkpoint ckpt = load_checkpoint(resume_from);
            return resume(ckpt, expect, volume, train_cfg);
        }
        return train(model, volume, train_cfg);
    }();

    std::cout << "variant: " << uinr::variant_name(result.config.variant) << "\n"
              << "parameters: " << result.net.parameter_count() << " ("
              << result.net.parameter_count() * 4 / 1000.0 << " KB as f32)\n";
    if (!result.log.empty() && result.log.back().note.empty()) {
        std::cout << "final loss: " << result.log.back().total << " after "
                  << result.log.back().epoch + 1 << " epochs\n";
    } else if (!result.log.empty()) {
        std::cout << result.log.back().note << "\n";
    }
    std::cout << "checkpoint: " << train_cfg.out_dir << "/model.bin\n";
    return 0;
}

int cmd_reconstruct(const std::string& ckpt_path, const std::string& out_dir,
                    const std::string& dims_flag, const std::string& fields_flag,
                    std::uint64_t seed) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const Network net = restore_network(ckpt);

    Dims dims = ckpt.dims;
    if (!dims_flag.empty()) {
        if (dims_flag.back() == 'x') {
            // Super-resolution scale, e.g. "2x" doubles every axis.
            double scale = 0.0;
            try {
                scale = std::stod(dims_flag.substr(0, dims_flag.size() - 1));
            } catch (const std::exception&) {
                throw ConfigError("--dims: cannot parse scale '" + dims_flag + "'");
            }
            if (scale <= 0.0) throw ConfigError("--dims: scale must be positive");
            for (auto& d : dims) d = static_cast<int>(std::lround(d * scale));
        } else {
            dims = parse_triplet<int>(dims_flag, "--dims");
        }
    }

    bool want_mean = true, want_au = true, want_eu = true;
    if (!fields_flag.empty()) {
        want_mean = want_au = want_eu = false;
        std::stringstream ss(fields_flag);
        std::string f;
        while (std::getline(ss, f, ',')) {
            if (f == "mean") want_mean = true;
            else if (f == "au") want_au = true;
            else if (f == "eu") want_eu = true;
            else throw ConfigError("--fields: unknown field '" + f + "'");
        }
    }
    if (ckpt.config.variant == Variant::Det && !fields_flag.empty() && (want_au || want_eu)) {
        throw UsageError("det checkpoints carry no uncertainty fields; only mean available");
    }

    const PredictionField field =
        reconstruct(ckpt.config, net, ckpt.norm, dims, seed, ckpt.spacing);
    std::filesystem::create_directories(out_dir);
    if (want_mean) write_field(out_dir + "/mean.vol", field.mean, "mean", ckpt.norm);
    if (field.au && want_au) write_field(out_dir + "/au.vol", *field.au, "au", ckpt.norm);
    if (field.eu && want_eu) write_field(out_dir + "/eu.vol", *field.eu, "eu", ckpt.norm);
    std::cout << "reconstruction seconds: " << field.seconds << "\n";
    return 0;
}

int cmd_evaluate(const VolumeSpec& gt_spec, const std::string& fields_dir,
                 const std::string& locvar_str, const std::string& interp_str,
                 bool squared_error, const std::string& report_path,
                 const std::string& csv_path, const std::string& ablation_against) {
    const VolumeGrid gt = load_input_volume(gt_spec);
    const VolumeGrid mean = read_volume(fields_dir + "/mean.vol").first;
    const VolumeGrid au = read_volume(fields_dir + "/au.vol").first;
    const VolumeGrid eu = read_volume(fields_dir + "/eu.vol").first;

    EvalReport rep = evaluate(gt, mean, au, eu, parse_triplet<int>(locvar_str, "--locvar-window"),
                              parse_triplet<int>(interp_str, "--interp-factors"), squared_error);
    json out = rep.to_json();

    if (!ablation_against.empty()) {
        std::ifstream in(ablation_against);
        if (!in) throw IoError("cannot open report: " + ablation_against);
        const EvalReport baseline = EvalReport::from_json(json::parse(in));
        out["ablation"] = ablation_compare(rep, baseline).to_json();
    }

    if (!report_path.empty()) {
        std::ofstream f(report_path);
        if (!f) throw IoError("cannot write report: " + report_path);
        f << out.dump(2) << "\n";
    }
    if (!csv_path.empty()) {
        std::ofstream f(csv_path);
        if (!f) throw IoError("cannot write csv: " + csv_path);
        f << EvalReport::csv_header() << "\n" << rep.csv_row() << "\n";
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_lcp(const std::string& fields_dir, const std::string& variance_kind, double isovalue,
            const std::string& out_path) {
    if (variance_kind != "eu" && variance_kind != "au") {
        throw ConfigError("--variance must be 'eu' or 'au'");
    }
    const auto [mean, mean_meta] = read_volume(fields_dir + "/mean.vol");
    const std::string var_path = fields_dir + "/" + variance_kind + ".vol";
    if (!std::filesystem::exists(var_path)) {
        throw UsageError("missing variance volume with field_kind '" + variance_kind +
                         "': " + var_path);
    }
    const auto [var_norm_units, var_meta] = read_volume(var_path);

    // Uncertainty volumes are stored in normalized units^2; the isovalue lives in
    // data units, so rescale the variance through the recorded normalization.
    VolumeGrid var = var_norm_units;
    if (var_meta.norm) {
        const double s2 = var_meta.norm->scale() * var_meta.norm->scale();
        std::vector<double> vals = var.values();
        for (auto& v : vals) v *= s2;
        var = VolumeGrid(var.dims(), std::move(vals), var.spacing());
    }

    const VolumeGrid lcp = lcp_field(GaussianField(mean, var), isovalue);
    VolumeMeta meta;
    meta.dims = lcp.dims();
    meta.spacing = lcp.spacing();
    meta.field_kind = "lcp";
    meta.isovalue = isovalue;
    write_volume(out_path, lcp, meta);
    std::cout << "wrote lcp: " << out_path << " (isovalue " << isovalue << ", variance "
              << variance_kind << ")\n";
    return 0;
}

int cmd_derive_fields(const VolumeSpec& spec, const std::string& out_dir,
                      const std::string& locvar_str, const std::string& interp_str) {
    const VolumeGrid vol = load_input_volume(spec);
    std::filesystem::create_directories(out_dir);
    write_field(out_dir + "/gradient_magnitude.vol", gradient_magnitude(vol),
                "gradient_magnitude");
    if (!locvar_str.empty()) {
        write_field(out_dir + "/local_variance.vol",
                    local_variance(vol, parse_triplet<int>(locvar_str, "--locvar-window")),
                    "local_variance");
    }
    if (!interp_str.empty()) {
        write_field(out_dir + "/interpolation_error.vol",
                    interpolation_error_field(
                        vol, parse_triplet<int>(interp_str, "--interp-factors")),
                    "interpolation_error");
    }
    return 0;
}

int cmd_info(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("cannot open: " + path);
    std::uint32_t magic = 0;
    probe.read(reinterpret_cast<char*>(&magic), sizeof(magic));
    probe.close();

    json out;
    if (magic == 0x524e4955) {  // checkpoint
        const Checkpoint ckpt = load_checkpoint(path);
        out["kind"] = "checkpoint";
        out["model"] = model_config_to_json(ckpt.config);
        out["dims"] = {ckpt.dims[0], ckpt.dims[1], ckpt.dims[2]};
        out["norm"] = norm_params_to_json(ckpt.norm);
        out["size_kb_f32"] = static_cast<double>(ckpt.params.size()) * 4 / 1000.0;
        out["has_optimizer_state"] = ckpt.state.has_value();
        if (ckpt.state) out["next_epoch"] = ckpt.state->next_epoch;
    } else if (std::filesystem::exists(path + ".json")) {
        const auto [vol, meta] = read_volume(path);
        out["kind"] = "volume";
        out["dims"] = {meta.dims[0], meta.dims[1], meta.dims[2]};
        out["field_kind"] = meta.field_kind;
        out["min"] = vol.min_value();
        out["max"] = vol.max_value();
        if (meta.isovalue) out["isovalue"] = *meta.isovalue;
        if (meta.norm) out["norm"] = norm_params_to_json(*meta.norm);
    } else {
        throw UsageError("unrecognized file (not a checkpoint, no volume sidecar): " + path);
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"uncertainty-aware implicit neural representations for volume data"};
    app.require_subcommand(1);

    // train
    auto* t = app.add_subcommand("train", "fit a model to a volume");
    VolumeSpec t_vol;
    add_volume_options(t, t_vol);
    std::string t_config, t_variant = "rev", t_out, t_resume;
    ModelConfig t_model;
    TrainConfig t_train;
    t->add_option("--config", t_config, "JSON config file (flags take precedence)");
    t->add_option("--variant", t_variant, "det, rev, mcd or rmd");
    t->add_option("--out", t_out, "output directory for checkpoints and logs");
    t->add_option("--resume", t_resume, "checkpoint to continue from");
    t->add_option("--width", t_model.width, "encoder width");
    t->add_option("--blocks", t_model.blocks, "residual block count");
    t->add_option("--decoders", t_model.decoders, "rmd decoder count");
    t->add_option("--decoder-hidden", t_model.decoder_hidden, "rmd decoder hidden width");
    t->add_option("--dropout-rate", t_model.dropout_rate, "mcd dropout rate");
    t->add_option("--mc-passes", t_model.mc_passes, "mcd stochastic passes");
    t->add_option("--epochs", t_train.epochs, "training epochs");
    t->add_option("--batch-size", t_train.batch_size, "samples per batch");
    t->add_option("--seed", t_train.seed, "master seed");
    t->add_option("--lr", t_train.lr.base_lr, "base learning rate");
    t->add_option("--lr-decay", t_train.lr.decay, "step decay factor");
    t->add_option("--lr-step", t_train.lr.step_size, "epochs per decay step");
    t->add_option("--checkpoint-every", t_train.checkpoint_every, "checkpoint cadence");
    auto* w1 = t->add_option("--lambda1", t_train.weights.lambda1, "evidential/NLL weight");
    auto* w2 = t->add_option("--lambda2", t_train.weights.lambda2, "EU-corr / rmd KL weight");
    auto* w3 = t->add_option("--lambda3", t_train.weights.lambda3, "AU-corr weight");
    auto* wd = t->add_option("--delta", t_train.weights.delta, "evidence penalty weight");

    // reconstruct
    auto* r = app.add_subcommand("reconstruct", "evaluate a checkpoint on a grid");
    std::string r_ckpt, r_out, r_dims, r_fields;
    std::uint64_t r_seed = 0;
    r->add_option("--checkpoint", r_ckpt, "model checkpoint")->required();
    r->add_option("--out", r_out, "output directory")->required();
    r->add_option("--dims", r_dims, "grid dims x,y,z or a scale like 2x");
    r->add_option("--fields", r_fields, "subset of mean,au,eu (default: all available)");
    r->add_option("--seed", r_seed, "seed for stochastic variants");

    // evaluate
    auto* e = app.add_subcommand("evaluate", "metrics against a ground-truth volume");
    VolumeSpec e_gt;
    add_volume_options(e, e_gt);
    std::string e_fields, e_locvar = "2", e_interp = "4", e_report, e_csv, e_against;
    bool e_squared = false;
    e->add_option("--fields-dir", e_fields, "directory holding mean/au/eu volumes")
        ->required();
    e->add_option("--locvar-window", e_locvar, "local variance window");
    e->add_option("--interp-factors", e_interp, "interpolation error factors");
    e->add_flag("--squared-error", e_squared, "EU reference: squared instead of abs error");
    e->add_option("--report", e_report, "write report JSON here");
    e->add_option("--csv", e_csv, "write a CSV row here");
    e->add_option("--ablation-against", e_against, "baseline report JSON for deltas");

    // lcp
    auto* l = app.add_subcommand("lcp", "level-crossing probability field");
    std::string l_fields, l_variance = "eu", l_out;
    double l_iso = 0.0;
    l->add_option("--fields-dir", l_fields, "directory holding mean/au/eu volumes")
        ->required();
    l->add_option("--variance", l_variance, "variance source: eu or au");
    l->add_option("--isovalue", l_iso, "isovalue in data units")->required();
    l->add_option("--out", l_out, "output LCP volume path")->required();

    // derive-fields
    auto* d = app.add_subcommand("derive-fields", "gradient/variance/interp reference fields");
    VolumeSpec d_vol;
    add_volume_options(d, d_vol);
    std::string d_out, d_locvar, d_interp;
    d->add_option("--out", d_out, "output directory")->required();
    d->add_option("--locvar-window", d_locvar, "also write local variance with this window");
    d->add_option("--interp-factors", d_interp, "also write interpolation error");

    // info
    auto* i = app.add_subcommand("info", "describe a checkpoint or volume file");
    std::string i_path;
    i->add_option("path", i_path, "checkpoint or volume file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (t->parsed()) {
            const bool weights_touched =
                w1->count() || w2->count() || w3->count() || wd->count();
            return cmd_train(t_vol, t_config, t_variant, t_out, t_resume, t_model, t_train,
                             weights_touched, t);
        }
        if (r->parsed()) return cmd_reconstruct(r_ckpt, r_out, r_dims, r_fields, r_seed);
        if (e->parsed()) {
            return cmd_evaluate(e_gt, e_fields, e_locvar, e_interp, e_squared, e_report,
                                e_csv, e_against);
        }
        if (l->parsed()) return cmd_lcp(l_fields, l_variance, l_iso, l_out);
        if (d->parsed()) return cmd_derive_fields(d_vol, d_out, d_locvar, d_interp);
        if (i->parsed()) return cmd_info(i_path);
    } catch (const ConfigError& err) {
        std::cerr << "config error: " << err.what() << "\n";
        return kExitConfig;
    } catch (const IoError& err) {
        std::cerr << "io error: " << err.what() << "\n";
        return kExitIo;
    } catch (const NumericError& err) {
        std::cerr << "numeric error: " << err.what() << "\n";
        return kExitNumeric;
    } catch (const UsageError& err) {
        std::cerr << "contract violation: " << err.what() << "\n";
        return kExitContract;
    }
    return 0;
}
