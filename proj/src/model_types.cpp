#include "ihmm/model_types.hpp"

#include <cmath>

#include "ihmm/errors.hpp"

namespace ihmm {

Eigen::VectorXd build_covariates(const RawEventFields& f, const CovariateLayout& layout) {
  if (static_cast<int>(f.tag.size()) != layout.n_tags ||
      static_cast<int>(f.ctag.size()) != layout.n_tags)
    throw DataError("build_covariates: tag vector length != n_tags");

  Eigen::VectorXd x(layout.dim());
  x[CovariateLayout::kIntercept] = f.intercept;
  x[CovariateLayout::kDay] = f.day;
  x[CovariateLayout::kCont] = (f.cont - layout.cont_mean) / 100.0;
  x[CovariateLayout::kRcv] = (f.rcv - layout.rcv_mean) / 100.0;
  x[CovariateLayout::kCrep] = f.crep;
  x[CovariateLayout::kRep] = f.rep;
  x[CovariateLayout::kRnk] = f.rnk;
  x[CovariateLayout::kDrnk] = f.drnk;
  for (int j = 0; j < 3; ++j) x[CovariateLayout::kBdg + j] = f.bdg[j];
  for (int j = 0; j < layout.n_tags; ++j) x[layout.tag_begin() + j] = f.tag[j];
  for (int j = 0; j < 3; ++j) x[layout.cbdg_begin() + j] = f.cbdg[j];
  for (int j = 0; j < layout.n_tags; ++j) x[layout.ctag_begin() + j] = f.ctag[j];

  if (!x.allFinite()) throw DataError("build_covariates: non-finite covariate");
  return x;
}

RawEventFields unpack_covariates(const Eigen::VectorXd& x, const CovariateLayout& layout) {
  if (x.size() != layout.dim()) throw DataError("unpack_covariates: wrong vector length");
  RawEventFields f;
  f.intercept = x[CovariateLayout::kIntercept];
  f.day = x[CovariateLayout::kDay];
  f.cont = x[CovariateLayout::kCont] * 100.0 + layout.cont_mean;
  f.rcv = x[CovariateLayout::kRcv] * 100.0 + layout.rcv_mean;
  f.crep = x[CovariateLayout::kCrep];
  f.rep = x[CovariateLayout::kRep];
  f.rnk = x[CovariateLayout::kRnk];
  f.drnk = x[CovariateLayout::kDrnk];
  for (int j = 0; j < 3; ++j) f.bdg[j] = x[CovariateLayout::kBdg + j];
  f.tag.resize(layout.n_tags);
  f.ctag.resize(layout.n_tags);
  for (int j = 0; j < layout.n_tags; ++j) f.tag[j] = x[layout.tag_begin() + j];
  for (int j = 0; j < 3; ++j) f.cbdg[j] = x[layout.cbdg_begin() + j];
  for (int j = 0; j < layout.n_tags; ++j) f.ctag[j] = x[layout.ctag_begin() + j];
  return f;
}

HyperParams HyperParams::defaults(int d, int d_demo) {
  HyperParams hp;
  int d2 = 2 * d;
  hp.mu_lambda0 = Eigen::VectorXd::Zero(d2);
  hp.sigma_lambda0 = Eigen::MatrixXd::Identity(d2, d2) * 0.25;
  hp.nw_mean0 = Eigen::VectorXd::Zero(d2);
  hp.nw_beta0 = 1.0;
  hp.nw_dof0 = d2 + 2;
  // E[cluster covariance] = B0 / (a0 - D - 1) = I at these defaults.
  hp.nw_scale0 = Eigen::MatrixXd::Identity(d2, d2);
  hp.mu_delta0 = Eigen::MatrixXd::Zero(d2, d_demo);
  return hp;
}

void HyperParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("hyperparams: ") + name + " must be positive");
  };
  positive(a_lambda, "a_lambda");
  positive(b_lambda, "b_lambda");
  positive(a_alpha, "a_alpha");
  positive(b_alpha, "b_alpha");
  positive(a_v0, "a_v0");
  positive(b_v0, "b_v0");
  positive(nw_beta0, "nw_beta0");
  positive(var_delta0, "var_delta0");
  if (mu_lambda0.size() == 0 || mu_lambda0.size() % 2 != 0)
    throw ConfigError("hyperparams: mu_lambda0 must have length 2d > 0");
  int d2 = static_cast<int>(mu_lambda0.size());
  if (sigma_lambda0.rows() != d2 || sigma_lambda0.cols() != d2)
    throw ConfigError("hyperparams: sigma_lambda0 must be 2d x 2d");
  if (nw_mean0.size() != d2 || nw_scale0.rows() != d2 || nw_scale0.cols() != d2)
    throw ConfigError("hyperparams: Normal-Wishart base must match 2d");
  if (!(nw_dof0 > d2 - 1)) throw ConfigError("hyperparams: nw_dof0 must exceed 2d - 1");
  if (mu_delta0.cols() > 0 && mu_delta0.rows() != d2)
    throw ConfigError("hyperparams: mu_delta0 must have 2d rows");
  {
    Eigen::LLT<Eigen::MatrixXd> llt(sigma_lambda0);
    if (llt.info() != Eigen::Success) throw ConfigError("hyperparams: sigma_lambda0 not SPD");
  }
  {
    Eigen::LLT<Eigen::MatrixXd> llt(nw_scale0);
    if (llt.info() != Eigen::Success) throw ConfigError("hyperparams: nw_scale0 not SPD");
  }
  if (particles < 1) throw ConfigError("hyperparams: particles must be >= 1");
  if (k_trunc < 1) throw ConfigError("hyperparams: k_trunc must be >= 1");
  if (barrier_period < 0) throw ConfigError("hyperparams: barrier_period must be >= 0");
}

}  // namespace ihmm
