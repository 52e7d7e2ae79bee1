#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace uinr {

using Dims = std::array<int, 3>;
using Spacing = std::array<double, 3>;
using Factors = std::array<int, 3>;

enum class RawDtype { F32le, F64le, U8, U16le };

RawDtype parse_dtype(const std::string& name);
std::string dtype_name(RawDtype d);
std::size_t dtype_width(RawDtype d);

/// Affine map between the raw data range and a training target range.
struct NormParams {
    double data_min = 0.0;
    double data_max = 1.0;
    double target_lo = -1.0;
    double target_hi = 1.0;

    double normalize(double x) const;
    double denormalize(double t) const;
    /// Variance scale factor: denormalized var = var * scale^2.
    double scale() const;
};

/// 3D scalar field on a regular grid, x fastest-varying.
class VolumeGrid {
public:
    VolumeGrid() = default;
    VolumeGrid(Dims dims, std::vector<double> values, Spacing spacing = {1.0, 1.0, 1.0});

    const Dims& dims() const { return dims_; }
    const Spacing& spacing() const { return spacing_; }
    const std::vector<double>& values() const { return values_; }
    std::size_t size() const { return values_.size(); }

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims_[0]) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims_[1]) * z);
    }
    double at(int x, int y, int z) const { return values_[index(x, y, z)]; }

    double min_value() const;
    double max_value() const;

private:
    Dims dims_{0, 0, 0};
    Spacing spacing_{1.0, 1.0, 1.0};
    std::vector<double> values_;
};

/// Points in the normalized [-1,1]^3 domain with optional supervision targets.
struct CoordinateBatch {
    std::vector<std::array<double, 3>> points;
    std::vector<double> targets;  // empty or same length as points
};

VolumeGrid load_raw(const std::string& path, Dims dims, RawDtype dtype,
                    Spacing spacing = {1.0, 1.0, 1.0});

std::pair<VolumeGrid, NormParams> normalize(const VolumeGrid& vol, double lo = -1.0,
                                            double hi = 1.0);
VolumeGrid denormalize(const VolumeGrid& vol, const NormParams& np);

/// Trilinear blend at continuous index coordinates p in [0, n-1] per axis.
double trilinear_sample(const VolumeGrid& vol, double px, double py, double pz);

/// Stride subsampling: keeps every f-th sample per axis starting at index 0.
VolumeGrid downsample(const VolumeGrid& vol, Factors factors);

VolumeGrid upsample_trilinear(const VolumeGrid& vol, Dims target_dims);

/// Central differences inside, one-sided at boundaries, scaled by spacing.
VolumeGrid gradient_magnitude(const VolumeGrid& vol);

/// Population variance over an axis-aligned window anchored at each grid point.
VolumeGrid local_variance(const VolumeGrid& vol, Factors window);

/// |vol - up(down(vol, factors))| elementwise.
VolumeGrid interpolation_error_field(const VolumeGrid& vol, Factors factors);

/// Index i on an axis of size n maps to -1 + 2i/(n-1), or 0 when n == 1.
CoordinateBatch grid_coordinates(Dims dims);
CoordinateBatch grid_coordinates(const VolumeGrid& vol);  // with targets

/// Emitted-volume sidecar metadata.
struct VolumeMeta {
    Dims dims;
    Spacing spacing{1.0, 1.0, 1.0};
    std::string field_kind = "scalar";
    std::optional<NormParams> norm;
    std::optional<double> isovalue;
};

/// Writes f64le payload at `path` plus a JSON sidecar at `path + ".json"`.
void write_volume(const std::string& path, const VolumeGrid& vol, const VolumeMeta& meta);
std::pair<VolumeGrid, VolumeMeta> read_volume(const std::string& path);

}  // namespace uinr
