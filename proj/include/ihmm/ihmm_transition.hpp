#ifndef IHMM_TRANSITION_HPP
#define IHMM_TRANSITION_HPP

// Integrated transition law of the infinite HMM (per-row transition measures
// collapsed out) and the auxiliary-variable refreshes for beta, lambda, alpha.

#include <vector>

#include <Eigen/Dense>

#include "ihmm/rng.hpp"

namespace ihmm::trans {

// p(s' = j | s = from) = (n(from,j) + alpha beta_j) / (n(from,.) + alpha),
// with the residual stick mass alpha beta_{L+1} giving the new-state slot.
// `out` must have room for L+1 entries; `from` is 1-based.
void transition_probs(const Eigen::MatrixXd& n, const Eigen::VectorXd& beta, double alpha,
                      int from, double* out);

// Single destination variant; `to` in 1..L+1 (L+1 = new state).
double transition_prob_to(const Eigen::MatrixXd& n, const Eigen::VectorXd& beta, double alpha,
                          int from, int to);

// Stick split on state birth: tail mass beta_{L+1} becomes
// (xi * tail, (1 - xi) * tail); everything else is unchanged.
Eigen::VectorXd grow_beta(const Eigen::VectorXd& beta, double xi);

// Lazily grown table of log unsigned Stirling numbers of the first kind,
// via S(n+1, m) = n S(n, m) + S(n, m-1) in log space.
class StirlingCache {
 public:
  double log_s(int n, int m);
  void ensure(int n);
  int max_n() const { return static_cast<int>(rows_.size()) - 1; }

 private:
  std::vector<std::vector<double>> rows_;  // rows_[n][m], m = 0..n
};

// Table-count draw: Pr(m) prop to S(n_ij, m) (alpha beta_j)^m, m = 0..n_ij.
// The weight sequence is log-concave in m, so the scan stops once it has
// dropped far enough below the running maximum.
int sample_m(int n_ij, double alpha_beta_j, StirlingCache& cache, Philox& g);

// beta | m ~ Dir(m_col_sums..., lambda); zero column sums are clamped to
// 1e-300 (recorded in clamp_count) so the draw degenerates instead of failing.
Eigen::VectorXd sample_beta_given_m(const Eigen::MatrixXd& m, double lambda, Philox& g);
long beta_clamp_count();

// Concentration refreshes. Both need the current value for their auxiliary
// draws (phi ~ Beta(lambda+1, m..), g_i ~ Beta(alpha+1, n_i)).
double sample_lambda(double lambda_current, int l_states, double m_total, double a, double b,
                     Philox& g, double* phi_out = nullptr);
// Empty rows contribute g = 1, h = 0. Outputs the auxiliary draws if asked.
double sample_alpha(double alpha_current, const Eigen::VectorXd& n_row_sums, double m_total,
                    double a, double b, Philox& g, Eigen::VectorXd* g_out = nullptr,
                    Eigen::VectorXd* h_out = nullptr);

}  // namespace ihmm::trans

#endif
