#pragma once

#include <Eigen/Core>
#include <map>
#include <string>

#include "uinr/evidential.hpp"

namespace uinr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct LossWeights {
    double lambda1 = 0.01;  // evidential weight (rev) or Gaussian NLL weight (mcd/rmd)
    double lambda2 = 0.01;  // EU-correlation weight (rev) or max KL-regularizer weight (rmd)
    double lambda3 = 0.01;  // AU-correlation weight (rev)
    double delta = 0.1;     // evidence-penalty weight inside the evidential loss
    double rmd_k = 5.0;     // exponential growth rate of the rmd scheduler

    void validate() const;  // throws ConfigError on negative weights
};

/// Target NIG hyperparameters for the evidential KL.
struct EvidentialTargets {
    double gamma_t = 10.0;
    double alpha_t = 5.0;
    double beta_t = 0.01;
};

struct BatchLossReport {
    double total = 0.0;
    std::map<std::string, double> components;  // raw (unweighted) component values
    std::map<std::string, double> weights;     // effective weights applied to each component
    int phase = 1;

    /// Recomputes total from components and weights; the invariant test checks
    /// |total - weighted_sum()| < 1e-10.
    double weighted_sum() const;
};

double mse(const VectorXd& pred, const VectorXd& y);

/// Batch mean of 0.5*ln(2*pi*sigma2) + (y-mu)^2/(2*sigma2).
double gauss_nll(const VectorXd& mu, const VectorXd& sigma2, const VectorXd& y);

/// Sample Pearson correlation; returns 0 when either vector's population
/// variance falls below 1e-12 (degenerate convention, gradient 0).
double pearson(const VectorXd& a, const VectorXd& b);

/// d pearson(a, b) / d a; zero vector under the degenerate convention.
VectorXd pearson_grad_a(const VectorXd& a, const VectorXd& b);

double eu_corr_loss(const VectorXd& eu, const VectorXd& xi);
double au_corr_loss(const VectorXd& au, const VectorXd& g);

/// lambda2(epoch) = lambda2_max * exp(k * (epoch/n - 1)).
double rmd_kl_weight(double lambda2_max, double k, int epoch, int n_epochs);

/// Discrete KL between the batch-normalized EU and error distributions
/// (shift to nonnegative, add eps=1e-8, normalize to sum 1).
double distribution_kl(const VectorXd& eu, const VectorXd& err, VectorXd* d_eu = nullptr,
                       VectorXd* d_err = nullptr);

/// Deterministic-INR loss: plain MSE on the single head output.
BatchLossReport det_total(const MatrixXd& raw, const VectorXd& y, MatrixXd* d_raw = nullptr);

/// REV-INR loss. `raw` is n x 4 head output, `g` the per-sample gradient-magnitude
/// targets. Phase 1 (epoch < floor(n/2)) is bitwise equal to MSE.
BatchLossReport rev_total(const MatrixXd& raw, const VectorXd& y, const VectorXd& g,
                          const LossWeights& w, const EvidentialTargets& tgt, int epoch,
                          int n_epochs, MatrixXd* d_raw = nullptr);

/// MCD-INR loss on n x 2 raw output (mu, sigma2 through softplus link).
BatchLossReport mcd_total(const MatrixXd& raw, const VectorXd& y, const LossWeights& w,
                          MatrixXd* d_raw = nullptr);

/// RMD-INR loss on n x 2D raw output (per-decoder mu, sigma2 pairs).
BatchLossReport rmd_total(const MatrixXd& raw, int decoders, const VectorXd& y,
                          const LossWeights& w, int epoch, int n_epochs,
                          MatrixXd* d_raw = nullptr);

}  // namespace uinr
