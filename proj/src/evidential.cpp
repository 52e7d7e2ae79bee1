#include "uinr/evidential.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <cmath>

#include "uinr/errors.hpp"

namespace uinr {

bool NIGParams::valid() const {
    return std::isfinite(v) && gamma > 0.0 && alpha > 1.0 && beta > 0.0 &&
           std::isfinite(gamma) && std::isfinite(alpha) && std::isfinite(beta);
}

void NIGParams::check() const {
    if (!valid()) {
        throw UsageError("NIGParams invariant violation: require gamma>0, alpha>1, beta>0, "
                         "all finite");
    }
}

double softplus(double x) {
    // log(1 + e^x), stable on both tails.
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double softplus_grad(double x) {
    if (x > 30.0) return 1.0;
    if (x < -30.0) return std::exp(x);
    return 1.0 / (1.0 + std::exp(-x));
}

NIGParams link(const RawEvidentialOutput& raw) {
    NIGParams p;
    p.v = raw.rv;
    p.gamma = softplus(raw.rgamma) + kLinkEps;
    p.alpha = softplus(raw.ralpha) + 1.0 + kLinkEps;
    p.beta = softplus(raw.rbeta) + kLinkEps;
    return p;
}

std::array<double, 4> link_jacobian(const RawEvidentialOutput& raw) {
    return {1.0, softplus_grad(raw.rgamma), softplus_grad(raw.ralpha),
            softplus_grad(raw.rbeta)};
}

PredictiveMoments predictive_moments(const NIGParams& nig) {
    if (!(nig.alpha > 1.0)) {
        throw UsageError("predictive_moments: alpha must exceed 1");
    }
    PredictiveMoments m;
    m.mean = nig.v;
    m.au = nig.beta / (nig.alpha - 1.0);
    m.eu = m.au / nig.gamma;
    return m;
}

double nig_log_pdf(double mu, double sigma2, const NIGParams& nig) {
    if (!(sigma2 > 0.0)) throw UsageError("nig_pdf: sigma2 must be positive");
    nig.check();
    const double lg = std::log(sigma2);
    return nig.alpha * std::log(nig.beta) + 0.5 * std::log(nig.gamma) -
           std::lgamma(nig.alpha) - 0.5 * std::log(2.0 * M_PI) - 0.5 * lg -
           (nig.alpha + 1.0) * lg -
           (2.0 * nig.beta + nig.gamma * (nig.v - mu) * (nig.v - mu)) / (2.0 * sigma2);
}

double nig_pdf(double mu, double sigma2, const NIGParams& nig) {
    return std::exp(nig_log_pdf(mu, sigma2, nig));
}

// NIG factorizes as N(mu | v, sigma2/gamma) * InvGamma(sigma2 | alpha, beta), so the KL is
// the Inverse-Gamma KL plus the conditional Normal KL averaged over p's Inverse-Gamma,
// using E_p[1/sigma2] = alpha1/beta1.
double nig_kl(const NIGParams& p, const NIGParams& q) {
    p.check();
    q.check();
    const double dv = p.v - q.v;
    const double ig = (p.alpha - q.alpha) * boost::math::digamma(p.alpha) -
                      std::lgamma(p.alpha) + std::lgamma(q.alpha) +
                      q.alpha * (std::log(p.beta) - std::log(q.beta)) +
                      p.alpha * (q.beta - p.beta) / p.beta;
    const double nrm = 0.5 * (std::log(p.gamma / q.gamma) + q.gamma / p.gamma - 1.0) +
                       0.5 * q.gamma * dv * dv * p.alpha / p.beta;
    return ig + nrm;
}

std::array<double, 4> nig_kl_grad_p(const NIGParams& p, const NIGParams& q) {
    p.check();
    q.check();
    const double dv = p.v - q.v;
    const double dL_dv = q.gamma * p.alpha * dv / p.beta;
    const double dL_dgamma = 0.5 / p.gamma - 0.5 * q.gamma / (p.gamma * p.gamma);
    const double dL_dalpha = (p.alpha - q.alpha) * boost::math::trigamma(p.alpha) +
                             (q.beta - p.beta) / p.beta +
                             0.5 * q.gamma * dv * dv / p.beta;
    const double dL_dbeta = q.alpha / p.beta - p.alpha * q.beta / (p.beta * p.beta) -
                            0.5 * q.gamma * dv * dv * p.alpha / (p.beta * p.beta);
    return {dL_dv, dL_dgamma, dL_dalpha, dL_dbeta};
}

double evidence_penalty(double y, const NIGParams& nig) {
    return std::abs(y - nig.v) * (2.0 * nig.gamma + nig.alpha);
}

std::array<double, 4> evidence_penalty_grad(double y, const NIGParams& nig) {
    const double r = y - nig.v;
    const double s = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
    return {-s * (2.0 * nig.gamma + nig.alpha), 2.0 * std::abs(r), std::abs(r), 0.0};
}

NIGParams target_nig(double y, double gamma_t, double alpha_t, double beta_t) {
    NIGParams t{y, gamma_t, alpha_t, beta_t};
    if (!t.valid()) {
        throw ConfigError("target_nig: hyperparameters violate NIG constraints "
                          "(gamma>0, alpha>1, beta>0)");
    }
    return t;
}

}  // namespace uinr
