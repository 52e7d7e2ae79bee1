#include "uinr/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "uinr/errors.hpp"

namespace uinr {

using nlohmann::json;

RawDtype parse_dtype(const std::string& name) {
    if (name == "f32le") return RawDtype::F32le;
    if (name == "f64le") return RawDtype::F64le;
    if (name == "u8") return RawDtype::U8;
    if (name == "u16le") return RawDtype::U16le;
    throw ConfigError("unknown dtype '" + name + "' (expected f32le, f64le, u8, u16le)");
}

std::string dtype_name(RawDtype d) {
    switch (d) {
        case RawDtype::F32le: return "f32le";
        case RawDtype::F64le: return "f64le";
        case RawDtype::U8: return "u8";
        case RawDtype::U16le: return "u16le";
    }
    return "?";
}

std::size_t dtype_width(RawDtype d) {
    switch (d) {
        case RawDtype::F32le: return 4;
        case RawDtype::F64le: return 8;
        case RawDtype::U8: return 1;
        case RawDtype::U16le: return 2;
    }
    return 0;
}

double NormParams::normalize(double x) const {
    return target_lo + (x - data_min) * (target_hi - target_lo) / (data_max - data_min);
}

double NormParams::denormalize(double t) const {
    return data_min + (t - target_lo) * (data_max - data_min) / (target_hi - target_lo);
}

double NormParams::scale() const {
    return (data_max - data_min) / (target_hi - target_lo);
}

VolumeGrid::VolumeGrid(Dims dims, std::vector<double> values, Spacing spacing)
    : dims_(dims), spacing_(spacing), values_(std::move(values)) {
    for (int i = 0; i < 3; ++i) {
        if (dims_[i] < 1) throw UsageError("VolumeGrid: nonpositive dimension");
        if (!(spacing_[i] > 0.0)) throw UsageError("VolumeGrid: nonpositive spacing");
    }
    const std::size_t expected = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
    if (values_.size() != expected) {
        throw UsageError("VolumeGrid: value count " + std::to_string(values_.size()) +
                         " does not match dims product " + std::to_string(expected));
    }
    for (double v : values_) {
        if (!std::isfinite(v)) throw NumericError("VolumeGrid: non-finite value");
    }
}

double VolumeGrid::min_value() const {
    return *std::min_element(values_.begin(), values_.end());
}

double VolumeGrid::max_value() const {
    return *std::max_element(values_.begin(), values_.end());
}

VolumeGrid load_raw(const std::string& path, Dims dims, RawDtype dtype, Spacing spacing) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open volume file: " + path);
    const std::size_t actual = static_cast<std::size_t>(in.tellg());
    const std::size_t count = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    const std::size_t expected = count * dtype_width(dtype);
    if (actual != expected) {
        throw IoError("size mismatch for " + path + ": expected " + std::to_string(expected) +
                      " bytes (" + std::to_string(count) + " x " + dtype_name(dtype) +
                      "), file has " + std::to_string(actual));
    }
    in.seekg(0);
    std::vector<char> raw(expected);
    in.read(raw.data(), static_cast<std::streamsize>(expected));
    if (!in) throw IoError("short read on " + path);

    std::vector<double> values(count);
    switch (dtype) {
        case RawDtype::F32le: {
            const float* p = reinterpret_cast<const float*>(raw.data());
            for (std::size_t i = 0; i < count; ++i) values[i] = static_cast<double>(p[i]);
            break;
        }
        case RawDtype::F64le: {
            std::memcpy(values.data(), raw.data(), expected);
            break;
        }
        case RawDtype::U8: {
            const std::uint8_t* p = reinterpret_cast<const std::uint8_t*>(raw.data());
            for (std::size_t i = 0; i < count; ++i) values[i] = static_cast<double>(p[i]);
            break;
        }
        case RawDtype::U16le: {
            const std::uint16_t* p = reinterpret_cast<const std::uint16_t*>(raw.data());
            for (std::size_t i = 0; i < count; ++i) values[i] = static_cast<double>(p[i]);
            break;
        }
    }
    return VolumeGrid(dims, std::move(values), spacing);
}

std::pair<VolumeGrid, NormParams> normalize(const VolumeGrid& vol, double lo, double hi) {
    if (!(hi > lo)) throw ConfigError("normalize: target_hi must exceed target_lo");
    NormParams np;
    np.data_min = vol.min_value();
    np.data_max = vol.max_value();
    np.target_lo = lo;
    np.target_hi = hi;
    if (!(np.data_max > np.data_min)) {
        throw UsageError("normalize: degenerate range, volume is constant at " +
                         std::to_string(np.data_min));
    }
    std::vector<double> out(vol.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = np.normalize(vol.values()[i]);
    return {VolumeGrid(vol.dims(), std::move(out), vol.spacing()), np};
}

VolumeGrid denormalize(const VolumeGrid& vol, const NormParams& np) {
    std::vector<double> out(vol.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = np.denormalize(vol.values()[i]);
    return VolumeGrid(vol.dims(), std::move(out), vol.spacing());
}

double trilinear_sample(const VolumeGrid& vol, double px, double py, double pz) {
    const auto& d = vol.dims();
    const double p[3] = {px, py, pz};
    int i0[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
        if (!(p[a] >= 0.0 && p[a] <= d[a] - 1)) {
            throw UsageError("trilinear_sample: coordinate " + std::to_string(p[a]) +
                             " outside [0, " + std::to_string(d[a] - 1) + "] on axis " +
                             std::to_string(a));
        }
        i0[a] = std::min(static_cast<int>(std::floor(p[a])), d[a] - 2 >= 0 ? d[a] - 2 : 0);
        if (d[a] == 1) i0[a] = 0;
        f[a] = p[a] - i0[a];
    }
    auto corner = [&](int dx, int dy, int dz) {
        const int x = std::min(i0[0] + dx, d[0] - 1);
        const int y = std::min(i0[1] + dy, d[1] - 1);
        const int z = std::min(i0[2] + dz, d[2] - 1);
        return vol.at(x, y, z);
    };
    double acc = 0.0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                const double w = (dx ? f[0] : 1.0 - f[0]) * (dy ? f[1] : 1.0 - f[1]) *
                                 (dz ? f[2] : 1.0 - f[2]);
                acc += w * corner(dx, dy, dz);
            }
    return acc;
}

VolumeGrid downsample(const VolumeGrid& vol, Factors factors) {
    const auto& d = vol.dims();
    for (int a = 0; a < 3; ++a) {
        if (factors[a] < 1) throw UsageError("downsample: factor must be >= 1");
    }
    Dims od;
    for (int a = 0; a < 3; ++a) od[a] = (d[a] + factors[a] - 1) / factors[a];
    std::vector<double> out(static_cast<std::size_t>(od[0]) * od[1] * od[2]);
    std::size_t k = 0;
    for (int z = 0; z < od[2]; ++z)
        for (int y = 0; y < od[1]; ++y)
            for (int x = 0; x < od[0]; ++x)
                out[k++] = vol.at(x * factors[0], y * factors[1], z * factors[2]);
    return VolumeGrid(od, std::move(out), vol.spacing());
}

VolumeGrid upsample_trilinear(const VolumeGrid& vol, Dims target_dims) {
    const auto& d = vol.dims();
    for (int a = 0; a < 3; ++a) {
        if (target_dims[a] < d[a]) {
            throw UsageError("upsample_trilinear: target dim " + std::to_string(target_dims[a]) +
                             " smaller than source dim " + std::to_string(d[a]));
        }
    }
    std::vector<double> out(static_cast<std::size_t>(target_dims[0]) * target_dims[1] *
                            target_dims[2]);
    // Proportional index mapping: corners map to corners.
    double sc[3];
    for (int a = 0; a < 3; ++a) {
        sc[a] = target_dims[a] > 1 ? static_cast<double>(d[a] - 1) / (target_dims[a] - 1) : 0.0;
    }
    std::size_t k = 0;
    for (int z = 0; z < target_dims[2]; ++z)
        for (int y = 0; y < target_dims[1]; ++y)
            for (int x = 0; x < target_dims[0]; ++x)
                out[k++] = trilinear_sample(vol, x * sc[0], y * sc[1], z * sc[2]);
    return VolumeGrid(target_dims, std::move(out), vol.spacing());
}

VolumeGrid gradient_magnitude(const VolumeGrid& vol) {
    const auto& d = vol.dims();
    const auto& sp = vol.spacing();
    for (int a = 0; a < 3; ++a) {
        if (d[a] < 2) {
            throw UsageError("gradient_magnitude: axis " + std::to_string(a) +
                             " has size 1, need >= 2");
        }
    }
    std::vector<double> out(vol.size());
    auto diff = [&](int x, int y, int z, int axis) {
        int c[3] = {x, y, z};
        const int n = d[axis];
        int lo[3] = {x, y, z}, hi[3] = {x, y, z};
        double denom;
        if (c[axis] == 0) {
            hi[axis] = 1;
            denom = sp[axis];
        } else if (c[axis] == n - 1) {
            lo[axis] = n - 2;
            denom = sp[axis];
        } else {
            lo[axis] = c[axis] - 1;
            hi[axis] = c[axis] + 1;
            denom = 2.0 * sp[axis];
        }
        return (vol.at(hi[0], hi[1], hi[2]) - vol.at(lo[0], lo[1], lo[2])) / denom;
    };
    std::size_t k = 0;
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x) {
                const double gx = diff(x, y, z, 0);
                const double gy = diff(x, y, z, 1);
                const double gz = diff(x, y, z, 2);
                out[k++] = std::sqrt(gx * gx + gy * gy + gz * gz);
            }
    return VolumeGrid(d, std::move(out), sp);
}

VolumeGrid local_variance(const VolumeGrid& vol, Factors window) {
    const auto& d = vol.dims();
    for (int a = 0; a < 3; ++a) {
        if (window[a] < 1 || window[a] > d[a]) {
            throw UsageError("local_variance: window must be within [1, dim] per axis");
        }
    }
    std::vector<double> out(vol.size());
    std::size_t k = 0;
    for (int z = 0; z < d[2]; ++z)
        for (int y = 0; y < d[1]; ++y)
            for (int x = 0; x < d[0]; ++x) {
                const int x1 = std::min(x + window[0], d[0]);
                const int y1 = std::min(y + window[1], d[1]);
                const int z1 = std::min(z + window[2], d[2]);
                double sum = 0.0, sum2 = 0.0;
                int n = 0;
                for (int zz = z; zz < z1; ++zz)
                    for (int yy = y; yy < y1; ++yy)
                        for (int xx = x; xx < x1; ++xx) {
                            const double v = vol.at(xx, yy, zz);
                            sum += v;
                            sum2 += v * v;
                            ++n;
                        }
                const double mean = sum / n;
                out[k++] = std::max(0.0, sum2 / n - mean * mean);
            }
    return VolumeGrid(d, std::move(out), vol.spacing());
}

VolumeGrid interpolation_error_field(const VolumeGrid& vol, Factors factors) {
    VolumeGrid rec = upsample_trilinear(downsample(vol, factors), vol.dims());
    std::vector<double> out(vol.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::abs(vol.values()[i] - rec.values()[i]);
    return VolumeGrid(vol.dims(), std::move(out), vol.spacing());
}

CoordinateBatch grid_coordinates(Dims dims) {
    CoordinateBatch batch;
    batch.points.reserve(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
    auto axis = [](int i, int n) { return n > 1 ? -1.0 + 2.0 * i / (n - 1) : 0.0; };
    for (int z = 0; z < dims[2]; ++z)
        for (int y = 0; y < dims[1]; ++y)
            for (int x = 0; x < dims[0]; ++x)
                batch.points.push_back({axis(x, dims[0]), axis(y, dims[1]), axis(z, dims[2])});
    return batch;
}

CoordinateBatch grid_coordinates(const VolumeGrid& vol) {
    CoordinateBatch batch = grid_coordinates(vol.dims());
    batch.targets = vol.values();
    return batch;
}

void write_volume(const std::string& path, const VolumeGrid& vol, const VolumeMeta& meta) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write volume file: " + path);
    out.write(reinterpret_cast<const char*>(vol.values().data()),
              static_cast<std::streamsize>(vol.size() * sizeof(double)));
    if (!out) throw IoError("write failed: " + path);

    json j;
    j["dims"] = {vol.dims()[0], vol.dims()[1], vol.dims()[2]};
    j["spacing"] = {vol.spacing()[0], vol.spacing()[1], vol.spacing()[2]};
    j["dtype"] = "f64le";
    j["field_kind"] = meta.field_kind;
    if (meta.norm) {
        j["norm"] = {{"min", meta.norm->data_min},
                     {"max", meta.norm->data_max},
                     {"lo", meta.norm->target_lo},
                     {"hi", meta.norm->target_hi}};
    }
    if (meta.isovalue) j["isovalue"] = *meta.isovalue;
    std::ofstream side(path + ".json");
    if (!side) throw IoError("cannot write sidecar: " + path + ".json");
    side << j.dump(2) << "\n";
}

std::pair<VolumeGrid, VolumeMeta> read_volume(const std::string& path) {
    std::ifstream side(path + ".json");
    if (!side) throw IoError("missing sidecar: " + path + ".json");
    json j;
    side >> j;
    VolumeMeta meta;
    meta.dims = {j.at("dims")[0].get<int>(), j.at("dims")[1].get<int>(),
                 j.at("dims")[2].get<int>()};
    if (j.contains("spacing")) {
        meta.spacing = {j["spacing"][0].get<double>(), j["spacing"][1].get<double>(),
                        j["spacing"][2].get<double>()};
    }
    meta.field_kind = j.value("field_kind", "scalar");
    if (j.contains("norm")) {
        NormParams np;
        np.data_min = j["norm"]["min"].get<double>();
        np.data_max = j["norm"]["max"].get<double>();
        np.target_lo = j["norm"]["lo"].get<double>();
        np.target_hi = j["norm"]["hi"].get<double>();
        meta.norm = np;
    }
    if (j.contains("isovalue")) meta.isovalue = j["isovalue"].get<double>();
    VolumeGrid vol = load_raw(path, meta.dims, RawDtype::F64le, meta.spacing);
    return {std::move(vol), meta};
}

}  // namespace uinr
