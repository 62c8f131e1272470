#ifndef IHMM_PARTICLE_FILTER_HPP
#define IHMM_PARTICLE_FILTER_HPP

// Particle Learning filter for the infinite HMM with logistic emissions.
// Each step: step-ahead weights over candidate states (including the unborn
// one), multinomial resample, state propagation, possible state birth, then
// the per-particle refresh chain m -> phi -> lambda -> (g,h) -> alpha -> beta
// and a conjugate redraw of the occupied state's emission coefficients.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ihmm/ihmm_transition.hpp"
#include "ihmm/model_types.hpp"

namespace ihmm::pf {

struct ParticleCloud {
  std::string user_id;
  std::uint64_t user_hash = 0;
  long t = 0;  // observations absorbed so far
  std::vector<Particle> particles;
  Eigen::VectorXd delta_shift;  // Delta * D_i, added to the Lambda baseline
};

struct StepDiag {
  long t = 0;
  double log_predictive = 0.0;  // log mean_b of the step-ahead weight
  double ess = 0.0;             // effective sample size of those weights
  int modal_l = 1;
  std::map<int, int> l_hist;
};

// Per-time, per-particle slice kept for backward smoothing.
struct SmoothNode {
  int s = 1;
  int L = 1;
  Eigen::MatrixXd n;
  Eigen::VectorXd beta;
  double alpha = 1.0;
};

struct FilterOptions {
  bool fidelity_weights = false;    // conditional-normal weighting instead of exact logistic
  bool systematic_resample = false;
  bool keep_snapshots = false;
};

struct FilterResult {
  ParticleCloud cloud;
  std::vector<StepDiag> diags;  // entry 0 is the init step (log_predictive = 0)
  std::vector<std::vector<SmoothNode>> snapshots;  // [t-1][b] when enabled
  double total_log_predictive = 0.0;  // sum over steps 2..T
};

// Scratch shared across steps; owns the Stirling table.
struct FilterScratch {
  trans::StirlingCache stirling;
  std::vector<std::vector<double>> logq;  // per ancestor: candidate log weights
  std::vector<std::vector<double>> cand_u;  // fidelity mode: candidate utilities
  std::vector<std::vector<int>> cand_z;     // fidelity mode: candidate components
  std::vector<double> log_g, probs;
  std::vector<int> ancestors;
  Eigen::MatrixXd lambda0_chol;  // Cholesky of sigma_lambda0, filled on init
};

ParticleCloud init_cloud(const ObservationRecord& first, const HyperParams& hp,
                         FilterScratch& scratch);

StepDiag step(ParticleCloud& cloud, const ObservationRecord& obs, const HyperParams& hp,
              const FilterOptions& opts, FilterScratch& scratch);

// Runs init + steps over one user's records (already time-ordered).
FilterResult filter_stream(const std::vector<ObservationRecord>& obs, const HyperParams& hp,
                           const FilterOptions& opts = {});

StepDiag snapshot_diag(const ParticleCloud& cloud);  // L histogram + modal L
// Debug-build invariant walk (count conservation, beta simplex, sizes).
void check_cloud(const ParticleCloud& cloud);

}  // namespace ihmm::pf

#endif
