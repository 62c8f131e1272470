#ifndef IHMM_CONJUGATE_GAUSSIAN_HPP
#define IHMM_CONJUGATE_GAUSSIAN_HPP

// Per-state conjugate Bayesian regression of the augmented utility on the
// covariates: U - mu_z = Gamma'x + N(0, sigma^2_z). Sufficient statistics are
// accumulated in precision-weighted form (Sxx, SxU); a running-mean mirror of
// the raw (x, U) stream is kept alongside for fidelity tests against the
// t/(t+1) recursion form.

#include <Eigen/Dense>

#include "ihmm/fsf_logit.hpp"
#include "ihmm/rng.hpp"

namespace ihmm::conj {

struct SufficientStats {
  long n = 0;
  Eigen::MatrixXd Sxx;  // sum x x' / sigma^2_z
  Eigen::VectorXd SxU;  // sum x (U - mu_z) / sigma^2_z
  // Mirror: running mean / central moments of the raw stream.
  Eigen::VectorXd xbar;
  double ubar = 0.0;
  Eigen::MatrixXd cxx;
  Eigen::VectorXd cxu;
  double cuu = 0.0;

  SufficientStats() = default;
  explicit SufficientStats(int d);
  int dim() const { return static_cast<int>(SxU.size()); }
};

// Absorb one augmented observation; z is the 0-based mixture component.
void update_stats(SufficientStats& st, const Eigen::VectorXd& x, double u, int z);

struct GammaPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd prec_chol;  // lower Cholesky of the posterior precision
  Eigen::MatrixXd cov;        // filled only when requested
};

// Lambda packs the diagonal prior as (means[0..d), log variances[d..2d)).
// The explicit covariance costs an extra O(d^3) solve; the sampling path
// only needs the precision Cholesky, so it is off by default.
GammaPosterior posterior_gamma(const SufficientStats& st, const Eigen::VectorXd& lambda,
                               bool need_cov = false);

// One-step-ahead conditional-normal log density of the new augmented point
// under the current posterior: N(U - mu_z | mean'x, x'cov x + sigma^2_z).
double integrated_loglik(const SufficientStats& st, const Eigen::VectorXd& lambda,
                         const Eigen::VectorXd& x, double u, int z);

// Draw from the posterior via the precision Cholesky (mean + L^{-T} z).
Eigen::VectorXd sample_gamma(const GammaPosterior& post, Philox& g);

}  // namespace ihmm::conj

#endif
