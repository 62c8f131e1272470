#ifndef IHMM_DP_VB_HPP
#define IHMM_DP_VB_HPP

// Truncated stick-breaking Gaussian mixture fit by variational EM.
// Clusters carry Normal-Wishart posteriors (B is the Wishart inverse scale,
// so E[T] = a B^-1); the stick concentration gets a Gamma posterior. The
// terminal stick is pinned at 1, leaving K-1 free Beta factors.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "ihmm/rng.hpp"

namespace ihmm::vb {

struct VbPrior {
  Eigen::VectorXd m0;   // NW base mean
  double beta0 = 1.0;   // NW mean precision scale
  double a0 = 0.0;      // Wishart dof, must exceed dim - 1
  Eigen::MatrixXd B0;   // Wishart inverse scale (SPD)
  double a_v0 = 1.0;    // concentration Gamma shape
  double b_v0 = 1.0;    // concentration Gamma rate
  int k_trunc = 30;

  static VbPrior defaults(int p);
  void validate(int p) const;
};

struct VariationalPosterior {
  int K = 0;
  Eigen::MatrixXd phi;             // N x K responsibilities
  Eigen::VectorXd gamma1, gamma2;  // stick Beta parameters; slot K-1 is the (1, 0) sentinel
  std::vector<Eigen::VectorXd> m;  // cluster means
  Eigen::VectorXd beta;            // mean precision scales
  Eigen::VectorXd a;               // Wishart dofs
  std::vector<Eigen::MatrixXd> B;  // Wishart inverse scales
  double a_v = 1.0, b_v = 1.0;     // q(alpha_v) Gamma parameters
  std::vector<double> elbo_trace;

  Eigen::VectorXd counts() const { return phi.colwise().sum(); }
};

// phi rows are normalized Uniform(0,1) draws; everything else starts at the prior.
VariationalPosterior vb_init(const Eigen::MatrixXd& data, const VbPrior& prior, Philox& g);

void e_step(VariationalPosterior& vp, const Eigen::MatrixXd& data, const VbPrior& prior);
void m_step(VariationalPosterior& vp, const Eigen::MatrixXd& data, const VbPrior& prior);
double elbo(const VariationalPosterior& vp, const Eigen::MatrixXd& data, const VbPrior& prior);

// M-step first so a random phi init is not flattened by the E-step before it
// can break symmetry. Throws NumericError if the ELBO drops by more than 1e-6.
VariationalPosterior run_vem(const Eigen::MatrixXd& data, const VbPrior& prior, Philox& g,
                             int max_iter = 200, double tol = 1e-7);

// KL divergences, first argument block is the approximating (left) side.
double kl_gamma(double a1, double b1, double a0, double b0);            // shape, rate
double kl_beta(double a1, double b1, double a0, double b0);
double kl_normal(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& S1,
                 const Eigen::VectorXd& mu0, const Eigen::MatrixXd& S0);
double kl_wishart(double a1, const Eigen::MatrixXd& B1, double a0, const Eigen::MatrixXd& B0);

double log_multivariate_gamma(int p, double x);
// E[log det T] under Wishart(a, B^-1).
double wishart_elogdet(double a, const Eigen::MatrixXd& B);

}  // namespace ihmm::vb

#endif
