#ifndef IHMM_GIBBS_ORACLE_HPP
#define IHMM_GIBBS_ORACLE_HPP

// Desk-scale ground truth: exhaustive path enumeration and a collapsed Gibbs
// sampler on a truncated instance with fixed alpha and beta. Emissions are
// either integrated over a scalar Gaussian prior (exact logit via quadrature,
// or the Gaussian-augmented form with frozen mixture draws, which is closed
// form through the conjugate module) or fixed per-state probabilities.

#include <map>
#include <vector>

#include <Eigen/Dense>

#include "ihmm/rng.hpp"

namespace ihmm::oracle {

enum class Emission {
  logit_quadrature,  // integrate sigma(gamma x)^y ... over gamma ~ N(mu0, var0)
  gaussian_frozen,   // integrate N(U - mu_z | gamma x, sigma2_z) over the same prior
  fixed_probs,       // known per-state success probabilities
};

struct TinyInstance {
  int K = 2;  // truncation; paths live in {1..K}^T
  double alpha = 1.0;
  Eigen::VectorXd beta;  // length K, fixed
  Eigen::MatrixXd n0;    // K x K base transition counts (the init convention)
  int s1 = 1;            // first state is pinned
  std::vector<int> y;
  Eigen::VectorXd x;  // scalar covariate per t
  Emission emission = Emission::logit_quadrature;
  double emis_mu0 = 0.0, emis_var0 = 4.0;
  std::vector<double> frozen_u;  // gaussian_frozen inputs
  std::vector<int> frozen_z;
  Eigen::MatrixXd state_prob1;  // K x T success probs for fixed_probs
  int quad_points = 64;
};

// The instance shipped with the gibbs-check command (T = 3, K = 2).
TinyInstance bundled_instance();

struct PathDist {
  std::vector<std::vector<int>> paths;  // 1-based states, length T
  Eigen::VectorXd prob;
};

// Physicists' Gauss-Hermite rule via Golub-Welsch.
void gauss_hermite(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights);

// log of the per-state evidence for the observations at `times` sitting in one
// state, under the instance's emission model.
double log_group_evidence(const TinyInstance& inst, const std::vector<int>& times);

// Exhaustive K^(T-1) enumeration, normalized.
PathDist exact_posterior(const TinyInstance& inst);

// Site conditional log weights for s_t (0-based site index t >= 1), used by
// the sweep and exported for the per-branch unit tests.
std::vector<double> site_log_weights(const TinyInstance& inst, const std::vector<int>& s, int t);

// Systematic-scan collapsed Gibbs; returns visited paths after burn-in.
PathDist collapsed_gibbs(const TinyInstance& inst, int sweeps, int burn_in, std::uint64_t seed);

double tv_distance(const PathDist& a, const PathDist& b);
// Per-time marginals from a path distribution: out[t][state-1].
std::vector<std::vector<double>> marginals(const PathDist& d, int max_state);
double max_marginal_tv(const std::vector<std::vector<double>>& a,
                       const std::vector<std::vector<double>>& b);

}  // namespace ihmm::oracle

#endif
