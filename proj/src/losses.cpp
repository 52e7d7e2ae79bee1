#include "uinr/losses.hpp"

#include <cmath>

#include "uinr/errors.hpp"

namespace uinr {

namespace {
constexpr double kVarEps = 1e-12;   // degenerate-variance threshold for Pearson
constexpr double kDistEps = 1e-8;   // additive mass in distribution_kl
constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5*ln(2*pi)

double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }
}  // namespace

void LossWeights::validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || delta < 0 || rmd_k <= 0) {
        throw ConfigError("LossWeights: weights must be >= 0 and rmd_k > 0");
    }
}

double BatchLossReport::weighted_sum() const {
    double s = 0.0;
    for (const auto& [name, value] : components) {
        auto it = weights.find(name);
        s += (it == weights.end() ? 1.0 : it->second) * value;
    }
    return s;
}

double mse(const VectorXd& pred, const VectorXd& y) {
    if (pred.size() != y.size() || pred.size() < 1) {
        throw UsageError("mse: length mismatch or empty batch");
    }
    return (pred - y).squaredNorm() / static_cast<double>(pred.size());
}

double gauss_nll(const VectorXd& mu, const VectorXd& sigma2, const VectorXd& y) {
    if (mu.size() != y.size() || sigma2.size() != y.size() || y.size() < 1) {
        throw UsageError("gauss_nll: length mismatch or empty batch");
    }
    double acc = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (!(sigma2[i] > 0.0)) throw UsageError("gauss_nll: nonpositive variance");
        const double r = y[i] - mu[i];
        acc += kHalfLog2Pi + 0.5 * std::log(sigma2[i]) + r * r / (2.0 * sigma2[i]);
    }
    return acc / static_cast<double>(y.size());
}

double pearson(const VectorXd& a, const VectorXd& b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw UsageError("pearson: need two vectors of equal length >= 2");
    }
    const double n = static_cast<double>(a.size());
    const VectorXd u = a.array() - a.mean();
    const VectorXd w = b.array() - b.mean();
    const double sa = u.squaredNorm();
    const double sb = w.squaredNorm();
    if (sa / n < kVarEps || sb / n < kVarEps) return 0.0;
    return u.dot(w) / std::sqrt(sa * sb);
}

VectorXd pearson_grad_a(const VectorXd& a, const VectorXd& b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw UsageError("pearson_grad_a: need two vectors of equal length >= 2");
    }
    const double n = static_cast<double>(a.size());
    const VectorXd u = a.array() - a.mean();
    const VectorXd w = b.array() - b.mean();
    const double sa = u.squaredNorm();
    const double sb = w.squaredNorm();
    if (sa / n < kVarEps || sb / n < kVarEps) return VectorXd::Zero(a.size());
    const double denom = std::sqrt(sa * sb);
    const double rho = u.dot(w) / denom;
    // Centering of b is absorbed by u having zero mean; likewise for a's centering.
    return (w / denom - (rho / sa) * u).eval();
}

double eu_corr_loss(const VectorXd& eu, const VectorXd& xi) { return 1.0 - pearson(eu, xi); }

double au_corr_loss(const VectorXd& au, const VectorXd& g) { return 1.0 - pearson(au, g); }

double rmd_kl_weight(double lambda2_max, double k, int epoch, int n_epochs) {
    if (n_epochs < 1) throw UsageError("rmd_kl_weight: n_epochs must be >= 1");
    return lambda2_max * std::exp(k * (static_cast<double>(epoch) / n_epochs - 1.0));
}

double distribution_kl(const VectorXd& eu, const VectorXd& err, VectorXd* d_eu,
                       VectorXd* d_err) {
    if (eu.size() != err.size() || eu.size() < 1) {
        throw UsageError("distribution_kl: length mismatch or empty batch");
    }
    const Eigen::Index n = eu.size();
    const double shift_p = std::min(0.0, eu.minCoeff());
    const double shift_q = std::min(0.0, err.minCoeff());
    VectorXd p = (eu.array() - shift_p + kDistEps).matrix();
    VectorXd q = (err.array() - shift_q + kDistEps).matrix();
    const double sp = p.sum();
    const double sq = q.sum();
    p /= sp;
    q /= sq;
    double kl = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) kl += p[i] * std::log(p[i] / q[i]);
    if (d_eu) {
        d_eu->resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            (*d_eu)[i] = (std::log(p[i] / q[i]) - kl) / sp;
        }
    }
    if (d_err) {
        d_err->resize(n);
        for (Eigen::Index i = 0; i < n; ++i) (*d_err)[i] = (1.0 - p[i] / q[i]) / sq;
    }
    return kl;
}

BatchLossReport det_total(const MatrixXd& raw, const VectorXd& y, MatrixXd* d_raw) {
    if (raw.cols() != 1) throw UsageError("det_total: expected single-output head");
    const VectorXd pred = raw.col(0);
    BatchLossReport rep;
    rep.phase = 1;
    rep.components["mse"] = mse(pred, y);
    rep.weights["mse"] = 1.0;
    rep.total = rep.components["mse"];
    if (d_raw) {
        d_raw->resize(raw.rows(), 1);
        d_raw->col(0) = 2.0 / static_cast<double>(y.size()) * (pred - y);
    }
    return rep;
}

BatchLossReport rev_total(const MatrixXd& raw, const VectorXd& y, const VectorXd& g,
                          const LossWeights& w, const EvidentialTargets& tgt, int epoch,
                          int n_epochs, MatrixXd* d_raw) {
    if (raw.cols() != 4) throw UsageError("rev_total: expected 4-output evidential head");
    if (raw.rows() != y.size()) throw UsageError("rev_total: batch length mismatch");
    w.validate();
    const Eigen::Index n = raw.rows();
    const double dn = static_cast<double>(n);
    const bool phase2 = epoch >= n_epochs / 2;

    BatchLossReport rep;
    rep.phase = phase2 ? 2 : 1;
    const VectorXd v = raw.col(0);
    rep.components["mse"] = mse(v, y);
    rep.weights["mse"] = 1.0;

    if (!phase2) {
        rep.total = rep.components["mse"];
        if (d_raw) {
            d_raw->setZero(n, 4);
            d_raw->col(0) = 2.0 / dn * (v - y);
        }
        return rep;
    }

    if (g.size() != n) throw UsageError("rev_total: gradient-magnitude targets missing");
    // Per-point linked parameters and moments.
    std::vector<NIGParams> nig(n);
    std::vector<std::array<double, 4>> jac(n);
    VectorXd eu(n), au(n), xi(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        RawEvidentialOutput r{raw(i, 0), raw(i, 1), raw(i, 2), raw(i, 3)};
        nig[i] = link(r);
        jac[i] = link_jacobian(r);
        const auto m = predictive_moments(nig[i]);
        au[i] = m.au;
        eu[i] = m.eu;
        xi[i] = std::abs(y[i] - nig[i].v);
    }

    double kl_sum = 0.0, reg_sum = 0.0;
    std::vector<std::array<double, 4>> kl_grads(n);
    std::vector<std::array<double, 4>> reg_grads(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const NIGParams q = target_nig(y[i], tgt.gamma_t, tgt.alpha_t, tgt.beta_t);
        kl_sum += nig_kl(nig[i], q);
        reg_sum += evidence_penalty(y[i], nig[i]);
        kl_grads[i] = nig_kl_grad_p(nig[i], q);
        reg_grads[i] = evidence_penalty_grad(y[i], nig[i]);
    }
    rep.components["kl"] = kl_sum / dn;
    rep.components["reg"] = reg_sum / dn;
    rep.components["eu_corr"] = eu_corr_loss(eu, xi);
    rep.components["au_corr"] = au_corr_loss(au, g);
    rep.weights["kl"] = w.lambda1;
    rep.weights["reg"] = w.lambda1 * w.delta;
    rep.weights["eu_corr"] = w.lambda2;
    rep.weights["au_corr"] = w.lambda3;
    rep.total = rep.weighted_sum();

    if (d_raw) {
        // d(1 - rho)/d arg = -pearson_grad.
        const VectorXd d_eu = -w.lambda2 * pearson_grad_a(eu, xi);
        const VectorXd d_xi = -w.lambda2 * pearson_grad_a(xi, eu);
        const VectorXd d_au = -w.lambda3 * pearson_grad_a(au, g);
        d_raw->resize(n, 4);
        for (Eigen::Index i = 0; i < n; ++i) {
            const NIGParams& p = nig[i];
            const double am1 = p.alpha - 1.0;
            double dv = 2.0 / dn * (p.v - y[i]);
            double dgamma = 0.0, dalpha = 0.0, dbeta = 0.0;
            const double wkl = w.lambda1 / dn;
            const double wreg = w.lambda1 * w.delta / dn;
            dv += wkl * kl_grads[i][0] + wreg * reg_grads[i][0];
            dgamma += wkl * kl_grads[i][1] + wreg * reg_grads[i][1];
            dalpha += wkl * kl_grads[i][2] + wreg * reg_grads[i][2];
            dbeta += wkl * kl_grads[i][3] + wreg * reg_grads[i][3];
            // EU = beta/(gamma*(alpha-1)), AU = beta/(alpha-1).
            dgamma += d_eu[i] * (-eu[i] / p.gamma);
            dalpha += d_eu[i] * (-eu[i] / am1) + d_au[i] * (-au[i] / am1);
            dbeta += d_eu[i] / (p.gamma * am1) + d_au[i] / am1;
            // xi = |y - v| flows back into the location parameter.
            dv += d_xi[i] * (-sign0(y[i] - p.v));
            (*d_raw)(i, 0) = dv * jac[i][0];
            (*d_raw)(i, 1) = dgamma * jac[i][1];
            (*d_raw)(i, 2) = dalpha * jac[i][2];
            (*d_raw)(i, 3) = dbeta * jac[i][3];
        }
    }
    return rep;
}

BatchLossReport mcd_total(const MatrixXd& raw, const VectorXd& y, const LossWeights& w,
                          MatrixXd* d_raw) {
    if (raw.cols() != 2) throw UsageError("mcd_total: expected 2-output head");
    if (raw.rows() != y.size()) throw UsageError("mcd_total: batch length mismatch");
    w.validate();
    const Eigen::Index n = raw.rows();
    const double dn = static_cast<double>(n);
    const VectorXd mu = raw.col(0);
    VectorXd sigma2(n);
    for (Eigen::Index i = 0; i < n; ++i) sigma2[i] = softplus(raw(i, 1)) + kLinkEps;

    BatchLossReport rep;
    rep.phase = 1;
    rep.components["mse"] = mse(mu, y);
    rep.components["nll"] = gauss_nll(mu, sigma2, y);
    rep.weights["mse"] = 1.0;
    rep.weights["nll"] = w.lambda1;
    rep.total = rep.weighted_sum();

    if (d_raw) {
        d_raw->resize(n, 2);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double r = mu[i] - y[i];
            const double dmu = 2.0 * r / dn + w.lambda1 * r / (sigma2[i] * dn);
            const double ds2 = w.lambda1 / dn *
                               (0.5 / sigma2[i] - r * r / (2.0 * sigma2[i] * sigma2[i]));
            (*d_raw)(i, 0) = dmu;
            (*d_raw)(i, 1) = ds2 * softplus_grad(raw(i, 1));
        }
    }
    return rep;
}

BatchLossReport rmd_total(const MatrixXd& raw, int decoders, const VectorXd& y,
                          const LossWeights& w, int epoch, int n_epochs, MatrixXd* d_raw) {
    if (decoders < 2) throw UsageError("rmd_total: need at least 2 decoders");
    if (raw.cols() != 2 * decoders) {
        throw UsageError("rmd_total: expected 2 outputs per decoder");
    }
    if (raw.rows() != y.size()) throw UsageError("rmd_total: batch length mismatch");
    w.validate();
    const Eigen::Index n = raw.rows();
    const double dn = static_cast<double>(n);
    const double dd = static_cast<double>(decoders);

    MatrixXd mu(n, decoders), sigma2(n, decoders);
    for (int d = 0; d < decoders; ++d) {
        mu.col(d) = raw.col(2 * d);
        for (Eigen::Index i = 0; i < n; ++i) {
            sigma2(i, d) = softplus(raw(i, 2 * d + 1)) + kLinkEps;
        }
    }
    const VectorXd m = mu.rowwise().mean();
    VectorXd eu(n), xi(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int d = 0; d < decoders; ++d) {
            const double c = mu(i, d) - m[i];
            acc += c * c;
        }
        eu[i] = acc / dd;
        xi[i] = std::abs(y[i] - m[i]);
    }

    double nll = 0.0;
    for (int d = 0; d < decoders; ++d) nll += gauss_nll(mu.col(d), sigma2.col(d), y);
    nll /= dd;

    VectorXd dkl_deu, dkl_dxi;
    const double kl = distribution_kl(eu, xi, d_raw ? &dkl_deu : nullptr,
                                      d_raw ? &dkl_dxi : nullptr);
    const double lam2 = rmd_kl_weight(w.lambda2, w.rmd_k, epoch, n_epochs);

    BatchLossReport rep;
    rep.phase = 1;
    rep.components["mse"] = mse(m, y);
    rep.components["nll"] = nll;
    rep.components["rmd_kl"] = kl;
    rep.weights["mse"] = 1.0;
    rep.weights["nll"] = w.lambda1;
    rep.weights["rmd_kl"] = lam2;
    rep.total = rep.weighted_sum();

    if (d_raw) {
        d_raw->resize(n, 2 * decoders);
        for (Eigen::Index i = 0; i < n; ++i) {
            // Shared pieces flowing through the decoder mean m.
            const double dm = 2.0 * (m[i] - y[i]) / dn + lam2 * dkl_dxi[i] * (-sign0(y[i] - m[i]));
            for (int d = 0; d < decoders; ++d) {
                const double r = mu(i, d) - y[i];
                double dmu = dm / dd;
                dmu += w.lambda1 / (dd * dn) * r / sigma2(i, d);
                dmu += lam2 * dkl_deu[i] * 2.0 / dd * (mu(i, d) - m[i]);
                const double ds2 =
                    w.lambda1 / (dd * dn) *
                    (0.5 / sigma2(i, d) - r * r / (2.0 * sigma2(i, d) * sigma2(i, d)));
                (*d_raw)(i, 2 * d) = dmu;
                (*d_raw)(i, 2 * d + 1) = ds2 * softplus_grad(raw(i, 2 * d + 1));
            }
        }
    }
    return rep;
}

}  // namespace uinr
