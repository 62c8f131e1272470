#ifndef IHMM_HIERARCHICAL_LINK_HPP
#define IHMM_HIERARCHICAL_LINK_HPP

// Cross-user coupling. At a barrier the engine (a) refits the demographics
// regression Delta from per-user per-state Lambda averages, (b) runs the
// variational mixture on the Delta residuals, then (c) redraws every
// particle's cluster tags and Lambda priors from the fitted mixture.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ihmm/dp_vb.hpp"
#include "ihmm/model_types.hpp"
#include "ihmm/particle_filter.hpp"
#include "ihmm/rng.hpp"

namespace ihmm::hier {

struct Demographics {
  std::string user_id;
  Eigen::VectorXd D;
};

// Row-wise independent conjugate regressions of Lambda coordinates on D.
struct DeltaPosterior {
  Eigen::MatrixXd mean;                   // 2d x d_demo
  Eigen::MatrixXd var;                    // per-entry posterior variances
  std::vector<Eigen::MatrixXd> cov_chol;  // per output row, lower Cholesky
  Eigen::MatrixXd sample(Philox& g) const;
};

// lambda_rows[j] is one (user, state) average, demo_rows[j] the owner's D,
// var_rows[j] the per-coordinate noise variances (the assigned cluster's, or
// the baseline prior's before any mixture fit). var_delta0 = 0 means a prior
// point mass: the posterior collapses onto mu_delta0.
DeltaPosterior update_delta(const std::vector<Eigen::VectorXd>& lambda_rows,
                            const std::vector<Eigen::VectorXd>& demo_rows,
                            const std::vector<Eigen::VectorXd>& var_rows,
                            const Eigen::MatrixXd& mu_delta0, double var_delta0);

// Particle-averaged Lambda rows for one user, states l = 1..lbar where lbar is
// the max realized L across particles; a particle's prospective slot past lbar
// folds into row lbar. noise_var rows average diag(B_c / a_c) over the
// particles' cluster tags, or repeat diag(sigma_lambda0) when vp is null.
struct UserRows {
  Eigen::MatrixXd lambda_bar;  // lbar x 2d
  Eigen::MatrixXd noise_var;   // lbar x 2d
  int lbar = 0;
};
UserRows average_rows(const pf::ParticleCloud& cloud, const vb::VariationalPosterior* vp,
                      const HyperParams& hp);

// Rows fed to the mixture: per-particle residual Lambda - Delta D, averaged
// over the particles holding each slot. delta_draws has one matrix per
// particle (or a single shared one).
Eigen::MatrixXd residual_rows(const pf::ParticleCloud& cloud,
                              const std::vector<Eigen::MatrixXd>& delta_draws,
                              const Eigen::VectorXd& D);

// Per-cluster lower Cholesky factors of B_k / a_k (the plug-in covariance).
std::vector<Eigen::MatrixXd> cluster_cov_chols(const vb::VariationalPosterior& vp);

// Redraws c, Lambda for every slot (prospective included) of every particle
// from the user's responsibility rows, and the prospective state's gamma from
// its refreshed Lambda. row_offset locates this user's first row in vp.phi.
void refresh_particle_priors(pf::ParticleCloud& cloud, const vb::VariationalPosterior& vp,
                             const std::vector<Eigen::MatrixXd>& cluster_chol, int row_offset,
                             int lbar, const std::vector<Eigen::MatrixXd>& delta_draws,
                             const Eigen::VectorXd& D, const HyperParams& hp, long barrier_index);

struct BarrierSchedule {
  long period = 25;  // 0 disables coupling
  bool due(long tick) const { return period > 0 && tick > 0 && tick % period == 0; }
};

}  // namespace ihmm::hier

#endif
