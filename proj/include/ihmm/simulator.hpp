#ifndef IHMM_SIMULATOR_HPP
#define IHMM_SIMULATOR_HPP

// Synthetic streams from finite-state specializations of the model. Asset
// covariates follow the documented accumulation semantics: cont/rcv/crep and
// the cumulative badge and tag counters only grow, weekly fields (rep, rnk,
// drnk) change every 7 ticks, badges fire at point thresholds.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ihmm/hierarchical_link.hpp"
#include "ihmm/model_types.hpp"
#include "ihmm/rng.hpp"

namespace ihmm::sim {

struct AssetConfig {
  CovariateLayout layout;
  // gold, silver, bronze cumulative-point thresholds; each tier fires once
  std::array<double, 3> badge_thresholds{8.0, 3.0, 1.0};
  double points_per_answer = 0.02;
  double p_receive = 0.3;  // chance a tick delivers an answer to the user's questions

  // default magnitudes keep |gamma . x| small enough to avoid saturating the
  // logistic for the coefficient scales the tests use
};

struct AssetState {
  double cont_total = 0.0, rcv_total = 0.0, crep_total = 0.0;
  double rep_week = 0.0, rep_last = 0.0;
  double rnk_last = 1.0, rnk_prev = 1.0;
  std::array<double, 3> cbdg{0.0, 0.0, 0.0};
  std::array<double, 3> bdg_recent{0.0, 0.0, 0.0};
  std::vector<double> ctag, tag_recent;

  explicit AssetState(int n_tags = 0)
      : ctag(n_tags, 0.0), tag_recent(n_tags, 0.0) {}
};

// Absorbs the outcome of tick t_of_y into the asset state: contribution and
// reputation counters, badge awards (one uniformly tagged), weekly rollover.
void advance_assets(AssetState& st, int y, long t_of_y, const AssetConfig& cfg, Philox& g);

// Lagged covariate fields for tick t (state reflects everything before t).
RawEventFields snapshot_fields(const AssetState& st, long t);

// Advances with y_prev (the outcome of tick t-1; ignored at t = 1) and packs
// the covariates for tick t.
RawEventFields gen_covariates(AssetState& st, int y_prev, long t, const AssetConfig& cfg,
                              Philox& g);

struct HmmStream {
  std::vector<ObservationRecord> obs;
  std::vector<int> states;  // 1-based
};

// States follow the given Markov chain, y ~ Bernoulli(logistic(gamma_s . x)).
HmmStream gen_hmm_stream(const std::vector<Eigen::VectorXd>& gammas, const Eigen::MatrixXd& trans,
                         long T, const AssetConfig& cfg, std::uint64_t seed,
                         const std::string& user_id);

struct SegmentSpec {
  double weight = 1.0;
  Eigen::VectorXd mu;   // per-state coefficient mean, length d
  double sigma = 0.2;   // isotropic coefficient sd
};

struct PopulationConfig {
  int users = 30;
  long T = 100;
  Eigen::MatrixXd trans;  // shared K_true x K_true chain
  std::vector<SegmentSpec> segments;
  int d_demo = 0;         // binary demographics, Bernoulli(1/2) entries
  Eigen::MatrixXd delta;  // d x d_demo shift applied to coefficient means
  AssetConfig assets;
};

struct PopulationTruth {
  std::vector<int> segment;
  std::vector<std::vector<Eigen::VectorXd>> gamma;  // [user][state]
  Eigen::MatrixXd delta;
};

struct Population {
  std::vector<ObservationRecord> events;  // global-tick order: t major, user minor
  std::vector<hier::Demographics> demographics;
  std::vector<std::vector<int>> states;  // [user][t-1]
  PopulationTruth truth;
};

// Per-user coefficients drawn from the segment mixture shifted by delta * D.
Population gen_population(const PopulationConfig& cfg, std::uint64_t seed);

}  // namespace ihmm::sim

#endif
