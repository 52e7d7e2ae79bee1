#pragma once

#include <array>

namespace uinr {

/// Normal-Inverse-Gamma posterior parameters at one point.
struct NIGParams {
    double v = 0.0;      // location
    double gamma = 1.0;  // > 0
    double alpha = 2.0;  // > 1
    double beta = 1.0;   // > 0

    bool valid() const;
    void check() const;  // throws UsageError on invariant violation
};

/// Unconstrained network head outputs (rv, rgamma, ralpha, rbeta).
struct RawEvidentialOutput {
    double rv = 0.0;
    double rgamma = 0.0;
    double ralpha = 0.0;
    double rbeta = 0.0;
};

inline constexpr double kLinkEps = 1e-6;

double softplus(double x);
/// d softplus / dx, the logistic function.
double softplus_grad(double x);

/// v = rv; gamma = sp(rg)+eps; alpha = sp(ra)+1+eps; beta = sp(rb)+eps.
NIGParams link(const RawEvidentialOutput& raw);

/// Diagonal Jacobian of link: d(v,gamma,alpha,beta)/d(rv,rg,ra,rb).
std::array<double, 4> link_jacobian(const RawEvidentialOutput& raw);

struct PredictiveMoments {
    double mean;
    double au;  // aleatoric uncertainty, E[sigma^2]
    double eu;  // epistemic uncertainty, Var[mu]
};

/// mean = v, AU = beta/(alpha-1), EU = beta/(gamma*(alpha-1)).
PredictiveMoments predictive_moments(const NIGParams& nig);

/// Joint density p(mu, sigma2 | v, gamma, alpha, beta), evaluated in log space.
double nig_log_pdf(double mu, double sigma2, const NIGParams& nig);
double nig_pdf(double mu, double sigma2, const NIGParams& nig);

/// Closed-form D_KL(p || q) between two NIG distributions.
double nig_kl(const NIGParams& p, const NIGParams& q);

/// Gradient of nig_kl with respect to p's parameters (v, gamma, alpha, beta).
std::array<double, 4> nig_kl_grad_p(const NIGParams& p, const NIGParams& q);

/// Incorrect-evidence penalty |y - v| * (2*gamma + alpha).
double evidence_penalty(double y, const NIGParams& nig);

/// Gradient of evidence_penalty w.r.t. (v, gamma, alpha, beta); subgradient 0 at y == v.
std::array<double, 4> evidence_penalty_grad(double y, const NIGParams& nig);

/// Low-uncertainty target distribution centered on the observed value.
NIGParams target_nig(double y, double gamma_t, double alpha_t, double beta_t);

}  // namespace uinr
