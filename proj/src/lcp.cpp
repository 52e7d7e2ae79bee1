#include "uinr/lcp.hpp"

#include <cmath>

#include "uinr/errors.hpp"

namespace uinr {

GaussianField::GaussianField(VolumeGrid m, VolumeGrid v)
    : mean(std::move(m)), var(std::move(v)) {
    if (mean.dims() != var.dims()) {
        throw UsageError("GaussianField: mean/var dimension mismatch");
    }
    for (double s2 : var.values()) {
        if (s2 < 0.0) throw UsageError("GaussianField: negative variance");
    }
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

double cell_lcp(const std::array<double, 8>& mu, const std::array<double, 8>& var, double c) {
    double prod_below = 1.0;  // all vertices below the isovalue
    double prod_above = 1.0;
    for (int i = 0; i < 8; ++i) {
        if (var[i] < 0.0) throw UsageError("cell_lcp: negative variance");
        double p;
        if (var[i] == 0.0) {
            p = c > mu[i] ? 1.0 : (c < mu[i] ? 0.0 : 0.5);
        } else {
            p = normal_cdf((c - mu[i]) / std::sqrt(var[i]));
        }
        prod_below *= p;
        prod_above *= 1.0 - p;
    }
    double lcp = 1.0 - prod_below - prod_above;
    if (lcp < 0.0) lcp = 0.0;
    if (lcp > 1.0) lcp = 1.0;
    return lcp;
}

namespace {
template <typename CellFn>
VolumeGrid over_cells(const VolumeGrid& ref, CellFn&& fn) {
    const auto& d = ref.dims();
    for (int a = 0; a < 3; ++a) {
        if (d[a] < 2) throw UsageError("lcp: need dims >= 2 per axis");
    }
    const Dims cd{d[0] - 1, d[1] - 1, d[2] - 1};
    std::vector<double> out(static_cast<std::size_t>(cd[0]) * cd[1] * cd[2]);
    std::size_t k = 0;
    for (int z = 0; z < cd[2]; ++z)
        for (int y = 0; y < cd[1]; ++y)
            for (int x = 0; x < cd[0]; ++x) out[k++] = fn(x, y, z);
    return VolumeGrid(cd, std::move(out), ref.spacing());
}

void gather_cell(const VolumeGrid& vol, int x, int y, int z, std::array<double, 8>& v) {
    int i = 0;
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) v[i++] = vol.at(x + dx, y + dy, z + dz);
}
}  // namespace

VolumeGrid lcp_field(const GaussianField& g, double isovalue) {
    return over_cells(g.mean, [&](int x, int y, int z) {
        std::array<double, 8> mu, var;
        gather_cell(g.mean, x, y, z, mu);
        gather_cell(g.var, x, y, z, var);
        return cell_lcp(mu, var, isovalue);
    });
}

VolumeGrid mean_crossing_mask(const VolumeGrid& mean, double isovalue) {
    return over_cells(mean, [&](int x, int y, int z) {
        std::array<double, 8> v;
        gather_cell(mean, x, y, z, v);
        bool any_leq = false, any_geq = false;
        for (double m : v) {
            if (m <= isovalue) any_leq = true;
            if (m >= isovalue) any_geq = true;
        }
        return any_leq && any_geq ? 1.0 : 0.0;
    });
}

}  // namespace uinr
