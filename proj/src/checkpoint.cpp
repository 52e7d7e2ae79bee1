#include "uinr/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "uinr/errors.hpp"

namespace uinr {

using nlohmann::json;

namespace {
constexpr std::uint32_t kMagic = 0x524e4955;  // "UINR"
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("checkpoint: truncated file");
    return v;
}
}  // namespace

json model_config_to_json(const ModelConfig& c) {
    json j;
    j["variant"] = variant_name(c.variant);
    j["width"] = c.width;
    j["blocks"] = c.blocks;
    j["omega0"] = c.omega0;
    j["omega_hidden"] = c.omega_hidden;
    if (c.variant == Variant::Rmd) {
        j["decoders"] = c.decoders;
        j["decoder_hidden"] = c.decoder_hidden;
    }
    if (c.variant == Variant::Mcd) {
        j["dropout_rate"] = c.dropout_rate;
        j["mc_passes"] = c.mc_passes;
    }
    j["parameter_count"] = c.parameter_count();
    return j;
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c = default_config(parse_variant(j.at("variant").get<std::string>()));
    c.width = j.value("width", c.width);
    c.blocks = j.value("blocks", c.blocks);
    c.omega0 = j.value("omega0", c.omega0);
    c.omega_hidden = j.value("omega_hidden", c.omega_hidden);
    c.decoders = j.value("decoders", c.decoders);
    c.decoder_hidden = j.value("decoder_hidden", c.decoder_hidden);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    c.mc_passes = j.value("mc_passes", c.mc_passes);
    c.validate();
    return c;
}

json norm_params_to_json(const NormParams& np) {
    return {{"min", np.data_min}, {"max", np.data_max}, {"lo", np.target_lo},
            {"hi", np.target_hi}};
}

NormParams norm_params_from_json(const json& j) {
    NormParams np;
    np.data_min = j.at("min").get<double>();
    np.data_max = j.at("max").get<double>();
    np.target_lo = j.at("lo").get<double>();
    np.target_hi = j.at("hi").get<double>();
    return np;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    json desc;
    desc["model"] = model_config_to_json(ckpt.config);
    desc["norm"] = norm_params_to_json(ckpt.norm);
    desc["dims"] = {ckpt.dims[0], ckpt.dims[1], ckpt.dims[2]};
    desc["spacing"] = {ckpt.spacing[0], ckpt.spacing[1], ckpt.spacing[2]};
    if (!ckpt.snapshot.is_null()) desc["run"] = ckpt.snapshot;
    if (ckpt.state) desc["next_epoch"] = ckpt.state->next_epoch;
    const std::string desc_str = desc.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    put(out, kMagic);
    put(out, kVersion);
    put(out, static_cast<std::uint32_t>(desc_str.size()));
    out.write(desc_str.data(), static_cast<std::streamsize>(desc_str.size()));

    const std::uint64_t n = static_cast<std::uint64_t>(ckpt.params.size());
    put(out, n);
    std::vector<float> f32(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        f32[i] = static_cast<float>(ckpt.params[static_cast<Eigen::Index>(i)]);
    }
    out.write(reinterpret_cast<const char*>(f32.data()),
              static_cast<std::streamsize>(n * sizeof(float)));

    put(out, static_cast<std::uint8_t>(ckpt.state ? 1 : 0));
    if (ckpt.state) {
        const auto& st = *ckpt.state;
        put(out, static_cast<std::int64_t>(st.adam.t));
        put(out, st.adam.beta1);
        put(out, st.adam.beta2);
        put(out, st.adam.eps);
        out.write(reinterpret_cast<const char*>(st.adam.m.data()),
                  static_cast<std::streamsize>(n * sizeof(double)));
        out.write(reinterpret_cast<const char*>(st.adam.v.data()),
                  static_cast<std::streamsize>(n * sizeof(double)));
        put(out, static_cast<std::int32_t>(st.next_epoch));
    }
    if (!out) throw IoError("checkpoint write failed: " + path);

    std::ofstream mirror(path + ".json");
    if (mirror) mirror << desc.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    if (get<std::uint32_t>(in) != kMagic) throw IoError("not a checkpoint file: " + path);
    const auto version = get<std::uint32_t>(in);
    if (version != kVersion) {
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto jlen = get<std::uint32_t>(in);
    std::string desc_str(jlen, '\0');
    in.read(desc_str.data(), jlen);
    if (!in) throw IoError("checkpoint: truncated descriptor");
    const json desc = json::parse(desc_str);

    Checkpoint ckpt;
    ckpt.config = model_config_from_json(desc.at("model"));
    ckpt.norm = norm_params_from_json(desc.at("norm"));
    ckpt.dims = {desc.at("dims")[0].get<int>(), desc.at("dims")[1].get<int>(),
                 desc.at("dims")[2].get<int>()};
    if (desc.contains("spacing")) {
        ckpt.spacing = {desc["spacing"][0].get<double>(), desc["spacing"][1].get<double>(),
                        desc["spacing"][2].get<double>()};
    }
    if (desc.contains("run")) ckpt.snapshot = desc["run"];

    const auto n = get<std::uint64_t>(in);
    if (n != ckpt.config.parameter_count()) {
        throw IoError("checkpoint: parameter count " + std::to_string(n) +
                      " does not match descriptor count " +
                      std::to_string(ckpt.config.parameter_count()));
    }
    std::vector<float> f32(n);
    in.read(reinterpret_cast<char*>(f32.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw IoError("checkpoint: truncated parameter payload");
    ckpt.params.resize(static_cast<Eigen::Index>(n));
    for (std::uint64_t i = 0; i < n; ++i) {
        ckpt.params[static_cast<Eigen::Index>(i)] = static_cast<double>(f32[i]);
    }

    if (get<std::uint8_t>(in) != 0) {
        TrainState st;
        st.adam = AdamState::zeros(n);
        st.adam.t = get<std::int64_t>(in);
        st.adam.beta1 = get<double>(in);
        st.adam.beta2 = get<double>(in);
        st.adam.eps = get<double>(in);
        in.read(reinterpret_cast<char*>(st.adam.m.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        in.read(reinterpret_cast<char*>(st.adam.v.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        st.next_epoch = get<std::int32_t>(in);
        if (!in) throw IoError("checkpoint: truncated optimizer state");
        ckpt.state = std::move(st);
    }
    return ckpt;
}

Network restore_network(const Checkpoint& ckpt) {
    Network net(ckpt.config.shape());
    if (net.params().size() != ckpt.params.size()) {
        throw IoError("checkpoint: parameter payload does not fit the architecture");
    }
    net.params() = ckpt.params;
    return net;
}

}  // namespace uinr
