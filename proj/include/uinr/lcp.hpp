#pragma once

#include <array>

#include "uinr/volume.hpp"

namespace uinr {

/// Per-vertex Gaussian (mean, variance) volumes feeding LCP computation.
struct GaussianField {
    VolumeGrid mean;
    VolumeGrid var;

    GaussianField(VolumeGrid m, VolumeGrid v);
};

/// Standard normal CDF, erf-based.
double normal_cdf(double x);

/// Level-crossing probability of one cell from its 8 independent vertex
/// Gaussians: LCP = 1 - prod(p_i) - prod(1 - p_i) with p_i = Phi((c - mu_i)/sigma_i).
/// sigma_i = 0 resolves by sign comparison, 0.5 on the tie c == mu_i.
double cell_lcp(const std::array<double, 8>& mu, const std::array<double, 8>& var, double c);

/// Cell-centered LCP volume of dims (nx-1, ny-1, nz-1), x-fastest cell order.
VolumeGrid lcp_field(const GaussianField& g, double isovalue);

/// 1 where the cell's vertex values straddle or touch the isovalue, else 0;
/// equals lcp_field in the var -> 0 limit.
VolumeGrid mean_crossing_mask(const VolumeGrid& mean, double isovalue);

}  // namespace uinr
