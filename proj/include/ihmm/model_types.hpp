#ifndef IHMM_MODEL_TYPES_HPP
#define IHMM_MODEL_TYPES_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ihmm/conjugate_gaussian.hpp"

namespace ihmm {

// Covariate vector layout. Slot order is fixed:
//   0 intercept (per-user fixed effect), 1 day effect, 2 cont, 3 rcv,
//   4 crep, 5 rep, 6 rnk, 7 drnk, 8..10 bdg, 11.. tag[n_tags],
//   then cbdg[3], then ctag[n_tags].  dim = 14 + 2*n_tags.
// cont and rcv are demeaned and divided by 100 when packed.
struct CovariateLayout {
  int n_tags = 0;
  double cont_mean = 0.0;
  double rcv_mean = 0.0;

  int dim() const { return 14 + 2 * n_tags; }
  int tag_begin() const { return 11; }
  int cbdg_begin() const { return 11 + n_tags; }
  int ctag_begin() const { return 14 + n_tags; }

  static constexpr int kIntercept = 0, kDay = 1, kCont = 2, kRcv = 3, kCrep = 4, kRep = 5,
                       kRnk = 6, kDrnk = 7, kBdg = 8;
};

// Raw per-field values as they appear on the wire (pre-scaling). The two
// leading entries exist because the per-user and per-day fixed effects are
// folded into the first two coefficients of Gamma.
struct RawEventFields {
  double intercept = 1.0;
  double day = 0.0;
  double cont = 0.0;
  double rcv = 0.0;
  double crep = 0.0;
  double rep = 0.0;
  double rnk = 0.0;
  double drnk = 0.0;
  std::array<double, 3> bdg{0.0, 0.0, 0.0};
  std::vector<double> tag;
  std::array<double, 3> cbdg{0.0, 0.0, 0.0};
  std::vector<double> ctag;
};

// Throws DataError on tag-vector dimension mismatch or non-finite input.
Eigen::VectorXd build_covariates(const RawEventFields& f, const CovariateLayout& layout);
// Exact inverse of build_covariates.
RawEventFields unpack_covariates(const Eigen::VectorXd& x, const CovariateLayout& layout);

struct ObservationRecord {
  std::string user_id;
  long t = 0;
  int y = 0;
  Eigen::VectorXd x;
  // Wire-exact raw fields, carried so re-emission is lossless: the /100
  // packing scale is not a power of two, so x alone cannot reproduce the
  // original bytes.
  RawEventFields raw;
};

// All prior hyperparameters plus run-shaping knobs.
struct HyperParams {
  // Stick / concentration priors, shape-rate Gammas.
  double a_lambda = 1.0, b_lambda = 1.0;
  double a_alpha = 1.0, b_alpha = 1.0;
  // Baseline prior on the per-state Lambda = (means, log variances), length 2d.
  Eigen::VectorXd mu_lambda0;
  Eigen::MatrixXd sigma_lambda0;
  // DP mixture over Lambda vectors: concentration Gamma(a_v0, b_v0) and the
  // Normal-Wishart cluster base (mean m0, scale beta0, dof a0, inverse scale B0).
  double a_v0 = 1.0, b_v0 = 1.0;
  Eigen::VectorXd nw_mean0;
  double nw_beta0 = 1.0;
  double nw_dof0 = 0.0;
  Eigen::MatrixXd nw_scale0;
  // Cross-user regression prior: per-entry mean and common variance.
  Eigen::MatrixXd mu_delta0;  // (2d) x d_demo, zero columns allowed
  double var_delta0 = 1.0;
  // Run shaping.
  int particles = 1000;
  int k_trunc = 30;
  long barrier_period = 25;  // 0 disables the hierarchical step
  std::uint64_t seed = 0;
  bool fidelity_weights = false;
  bool systematic_resample = false;

  int d() const { return static_cast<int>(mu_lambda0.size()) / 2; }
  static HyperParams defaults(int d, int d_demo = 0);
  void validate() const;  // throws ConfigError
};

// One Sequential Monte Carlo particle. Per-state arrays have L+1 slots: the
// trailing slot holds the prospective new state's prior-level draws, which the
// birth branch promotes to a realized state.
struct Particle {
  int s = 1;  // current state, 1-based
  int L = 1;  // realized state count
  Eigen::MatrixXd n;     // L x L transition counts (init seeds n(0,0) = 1)
  Eigen::VectorXd beta;  // L+1: realized states then residual stick mass
  double alpha = 1.0;
  double lambda = 1.0;
  std::vector<Eigen::VectorXd> gamma;   // L+1 vectors, length d
  std::vector<Eigen::VectorXd> Lambda;  // L+1 vectors, length 2d
  std::vector<int> c;                   // L+1 cluster tags
  std::vector<conj::SufficientStats> stats;  // L entries (realized states)

  // Latest auxiliary draws, kept for diagnostics and the fidelity tests.
  struct Aux {
    Eigen::MatrixXd m;  // table counts, L x L
    double phi = 0.0;
    Eigen::VectorXd g;
    Eigen::VectorXd h;
    double u = 0.0;
    int z = 0;
    double du = 0.0, eu = 0.0;
  } aux;

  double m_total() const { return aux.m.sum(); }
};

}  // namespace ihmm

#endif
