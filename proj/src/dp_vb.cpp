#include "ihmm/dp_vb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/special_functions/digamma.hpp>

#include "ihmm/errors.hpp"
#include "ihmm/kernels.hpp"

namespace ihmm::vb {

namespace {

using boost::math::digamma;

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kLog2 = 0.6931471805599453094;

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

double logdet_spd(const Eigen::MatrixXd& A, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) throw NumericError(std::string(what) + ": matrix not SPD");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

// E[log v_k], E[log(1-v_k)] for the free sticks; the sentinel contributes 0 / -inf.
void stick_elogs(const VariationalPosterior& vp, Eigen::VectorXd& elog_v,
                 Eigen::VectorXd& elog_1mv) {
  const int K = vp.K;
  elog_v.setZero(K);
  elog_1mv.setZero(K);
  for (int k = 0; k < K - 1; ++k) {
    double s = digamma(vp.gamma1[k] + vp.gamma2[k]);
    elog_v[k] = digamma(vp.gamma1[k]) - s;
    elog_1mv[k] = digamma(vp.gamma2[k]) - s;
  }
}

Eigen::VectorXd expected_log_pi(const VariationalPosterior& vp) {
  Eigen::VectorXd elog_v, elog_1mv;
  stick_elogs(vp, elog_v, elog_1mv);
  Eigen::VectorXd out(vp.K);
  double acc = 0.0;
  for (int k = 0; k < vp.K; ++k) {
    out[k] = elog_v[k] + acc;
    acc += elog_1mv[k];
  }
  return out;
}

}  // namespace

VbPrior VbPrior::defaults(int p) {
  VbPrior pr;
  pr.m0 = Eigen::VectorXd::Zero(p);
  pr.beta0 = 1.0;
  pr.a0 = p + 2.0;
  pr.B0 = Eigen::MatrixXd::Identity(p, p);
  return pr;
}

void VbPrior::validate(int p) const {
  if (m0.size() != p || B0.rows() != p || B0.cols() != p)
    throw ConfigError("VbPrior: dimension mismatch");
  if (!(beta0 > 0.0) || !(a_v0 > 0.0) || !(b_v0 > 0.0) || k_trunc < 1)
    throw ConfigError("VbPrior: nonpositive hyperparameter");
  if (!(a0 > p - 1.0)) throw ConfigError("VbPrior: Wishart dof too small");
  Eigen::LLT<Eigen::MatrixXd> llt(B0);
  if (llt.info() != Eigen::Success) throw ConfigError("VbPrior: B0 not SPD");
}

VariationalPosterior vb_init(const Eigen::MatrixXd& data, const VbPrior& prior, Philox& g) {
  const int N = static_cast<int>(data.rows());
  const int p = static_cast<int>(data.cols());
  if (N < 1) throw ConfigError("vb_init: empty data");
  prior.validate(p);

  VariationalPosterior vp;
  vp.K = std::min(N, prior.k_trunc);
  vp.phi.resize(N, vp.K);
  for (int n = 0; n < N; ++n) {
    for (int k = 0; k < vp.K; ++k) vp.phi(n, k) = rnd::u01(g);
    vp.phi.row(n) /= vp.phi.row(n).sum();
  }
  vp.gamma1 = Eigen::VectorXd::Ones(vp.K);
  vp.gamma2 = Eigen::VectorXd::Constant(vp.K, prior.a_v0 / prior.b_v0);
  vp.gamma1[vp.K - 1] = 1.0;
  vp.gamma2[vp.K - 1] = 0.0;
  vp.m.assign(vp.K, prior.m0);
  vp.beta = Eigen::VectorXd::Constant(vp.K, prior.beta0);
  vp.a = Eigen::VectorXd::Constant(vp.K, prior.a0);
  vp.B.assign(vp.K, prior.B0);
  vp.a_v = prior.a_v0;
  vp.b_v = prior.b_v0;
  return vp;
}

void e_step(VariationalPosterior& vp, const Eigen::MatrixXd& data, const VbPrior& prior) {
  const int N = static_cast<int>(data.rows());
  const int p = static_cast<int>(data.cols());
  const int K = vp.K;

  Eigen::VectorXd elog_pi = expected_log_pi(vp);
  Eigen::VectorXd half_elogdet(K), p_over_beta(K);
  std::vector<Eigen::LLT<Eigen::MatrixXd>> llts(K);
  for (int k = 0; k < K; ++k) {
    llts[k].compute(vp.B[k]);
    if (llts[k].info() != Eigen::Success)
      throw NumericError("e_step: B not SPD for cluster " + std::to_string(k));
    half_elogdet[k] = 0.5 * wishart_elogdet(vp.a[k], vp.B[k]);
    p_over_beta[k] = p / vp.beta[k];
  }

  std::vector<double> lw(K);
  for (int n = 0; n < N; ++n) {
    for (int k = 0; k < K; ++k) {
      Eigen::VectorXd d = data.row(n).transpose() - vp.m[k];
      double quad = vp.a[k] * d.dot(llts[k].solve(d));
      lw[k] = elog_pi[k] + half_elogdet[k] - 0.5 * (quad + p_over_beta[k]);
    }
    double lse = kernels::logsumexp(lw.data(), lw.size());
    for (int k = 0; k < K; ++k) vp.phi(n, k) = std::exp(lw[k] - lse);
    vp.phi.row(n) /= vp.phi.row(n).sum();
  }

  Eigen::VectorXd elog_v, elog_1mv;
  stick_elogs(vp, elog_v, elog_1mv);
  vp.a_v = prior.a_v0 + K - 1;
  vp.b_v = prior.b_v0 - elog_1mv.head(K - 1).sum();
  if (!(vp.b_v > 0.0)) throw NumericError("e_step: concentration rate went nonpositive");
}

void m_step(VariationalPosterior& vp, const Eigen::MatrixXd& data, const VbPrior& prior) {
  const int N = static_cast<int>(data.rows());
  const int p = static_cast<int>(data.cols());
  const int K = vp.K;

  Eigen::VectorXd nbar = vp.counts();
  double alpha_bar = vp.a_v / vp.b_v;
  double tail = 0.0;
  for (int k = K - 1; k >= 0; --k) {
    if (k < K - 1) {
      vp.gamma1[k] = 1.0 + nbar[k];
      vp.gamma2[k] = alpha_bar + tail;
    }
    tail += nbar[k];
  }

  for (int k = 0; k < K; ++k) {
    if (nbar[k] <= 0.0) {
      vp.m[k] = prior.m0;
      vp.beta[k] = prior.beta0;
      vp.a[k] = prior.a0;
      vp.B[k] = prior.B0;
      continue;
    }
    Eigen::VectorXd xbar = Eigen::VectorXd::Zero(p);
    for (int n = 0; n < N; ++n) xbar += vp.phi(n, k) * data.row(n).transpose();
    xbar /= nbar[k];
    Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(p, p);
    for (int n = 0; n < N; ++n) {
      Eigen::VectorXd d = data.row(n).transpose() - xbar;
      scatter.selfadjointView<Eigen::Lower>().rankUpdate(d, vp.phi(n, k));
    }
    scatter.triangularView<Eigen::StrictlyUpper>() =
        scatter.triangularView<Eigen::StrictlyLower>().transpose();

    vp.beta[k] = prior.beta0 + nbar[k];
    vp.m[k] = (prior.beta0 * prior.m0 + nbar[k] * xbar) / vp.beta[k];
    vp.a[k] = prior.a0 + nbar[k];
    Eigen::VectorXd dm = xbar - prior.m0;
    vp.B[k] = prior.B0 + scatter +
              (prior.beta0 * nbar[k] / (prior.beta0 + nbar[k])) * (dm * dm.transpose());
  }
}

double elbo(const VariationalPosterior& vp, const Eigen::MatrixXd& data, const VbPrior& prior) {
  const int N = static_cast<int>(data.rows());
  const int p = static_cast<int>(data.cols());
  const int K = vp.K;

  Eigen::VectorXd elog_pi = expected_log_pi(vp);
  double total = 0.0;

  // expected data log-likelihood and assignment entropy
  for (int k = 0; k < K; ++k) {
    Eigen::LLT<Eigen::MatrixXd> llt(vp.B[k]);
    if (llt.info() != Eigen::Success) throw NumericError("elbo: B not SPD");
    double half_elogdet = 0.5 * wishart_elogdet(vp.a[k], vp.B[k]);
    for (int n = 0; n < N; ++n) {
      double ph = vp.phi(n, k);
      if (ph <= 0.0) continue;
      Eigen::VectorXd d = data.row(n).transpose() - vp.m[k];
      double quad = vp.a[k] * d.dot(llt.solve(d));
      total += ph * (elog_pi[k] + half_elogdet - 0.5 * (p * kLog2Pi + quad + p / vp.beta[k]));
      total -= xlogx(ph);
    }
  }

  // free sticks against Beta(1, E[alpha_v]), corrected for E[log alpha_v] - log E[alpha_v]
  double alpha_bar = vp.a_v / vp.b_v;
  double elog_alpha_correction = digamma(vp.a_v) - std::log(vp.a_v);
  for (int k = 0; k < K - 1; ++k)
    total += -kl_beta(vp.gamma1[k], vp.gamma2[k], 1.0, alpha_bar) + elog_alpha_correction;

  total -= kl_gamma(vp.a_v, vp.b_v, prior.a_v0, prior.b_v0);

  // Normal-Wishart blocks: Wishart KL plus the conditional mean KL under q(T)
  for (int k = 0; k < K; ++k) {
    total -= kl_wishart(vp.a[k], vp.B[k], prior.a0, prior.B0);
    Eigen::LLT<Eigen::MatrixXd> llt(vp.B[k]);
    Eigen::VectorXd dm = vp.m[k] - prior.m0;
    double quad = prior.beta0 * vp.a[k] * dm.dot(llt.solve(dm));
    total -= 0.5 * (quad + p * prior.beta0 / vp.beta[k] - p +
                    p * std::log(vp.beta[k] / prior.beta0));
  }
  return total;
}

VariationalPosterior run_vem(const Eigen::MatrixXd& data, const VbPrior& prior, Philox& g,
                             int max_iter, double tol) {
  if (max_iter < 1 || !(tol > 0.0)) throw ConfigError("run_vem: bad max_iter or tol");
  VariationalPosterior vp = vb_init(data, prior, g);
  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iter; ++it) {
    m_step(vp, data, prior);
    e_step(vp, data, prior);
    double cur = elbo(vp, data, prior);
    if (!std::isfinite(cur)) throw NumericError("run_vem: ELBO not finite");
    if (cur < prev - 1e-6)
      throw NumericError("run_vem: ELBO decreased by " + std::to_string(prev - cur));
    vp.elbo_trace.push_back(cur);
    if (it > 0 && cur - prev < tol) break;
    prev = cur;
  }
  return vp;
}

double kl_gamma(double a1, double b1, double a0, double b0) {
  if (!(a1 > 0.0) || !(b1 > 0.0) || !(a0 > 0.0) || !(b0 > 0.0))
    throw ConfigError("kl_gamma: nonpositive parameter");
  return (a1 - a0) * digamma(a1) - std::lgamma(a1) + std::lgamma(a0) +
         a0 * (std::log(b1) - std::log(b0)) + a1 * (b0 - b1) / b1;
}

double kl_beta(double a1, double b1, double a0, double b0) {
  if (!(a1 > 0.0) || !(b1 > 0.0) || !(a0 > 0.0) || !(b0 > 0.0))
    throw ConfigError("kl_beta: nonpositive parameter");
  auto log_beta_fn = [](double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  };
  return log_beta_fn(a0, b0) - log_beta_fn(a1, b1) + (a1 - a0) * digamma(a1) +
         (b1 - b0) * digamma(b1) + (a0 - a1 + b0 - b1) * digamma(a1 + b1);
}

double kl_normal(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& S1,
                 const Eigen::VectorXd& mu0, const Eigen::MatrixXd& S0) {
  const int p = static_cast<int>(mu1.size());
  Eigen::LLT<Eigen::MatrixXd> llt0(S0);
  if (llt0.info() != Eigen::Success) throw ConfigError("kl_normal: S0 not SPD");
  double logdet0 = logdet_spd(S0, "kl_normal");
  double logdet1 = logdet_spd(S1, "kl_normal");
  Eigen::VectorXd dm = mu0 - mu1;
  double tr = llt0.solve(S1).trace();
  double quad = dm.dot(llt0.solve(dm));
  return 0.5 * (tr + quad - p + logdet0 - logdet1);
}

double log_multivariate_gamma(int p, double x) {
  double out = 0.25 * p * (p - 1) * std::log(M_PI);
  for (int i = 0; i < p; ++i) out += std::lgamma(x - 0.5 * i);
  return out;
}

double wishart_elogdet(double a, const Eigen::MatrixXd& B) {
  const int p = static_cast<int>(B.rows());
  double out = p * kLog2 - logdet_spd(B, "wishart_elogdet");
  for (int i = 1; i <= p; ++i) out += digamma(0.5 * (a + 1 - i));
  return out;
}

double kl_wishart(double a1, const Eigen::MatrixXd& B1, double a0, const Eigen::MatrixXd& B0) {
  const int p = static_cast<int>(B1.rows());
  if (!(a1 > p - 1.0) || !(a0 > p - 1.0)) throw ConfigError("kl_wishart: dof too small");
  Eigen::LLT<Eigen::MatrixXd> llt1(B1);
  if (llt1.info() != Eigen::Success) throw ConfigError("kl_wishart: B1 not SPD");
  double logdet1 = logdet_spd(B1, "kl_wishart");
  double logdet0 = logdet_spd(B0, "kl_wishart");
  double elogdet = wishart_elogdet(a1, B1);
  double tr = llt1.solve(B0).trace();  // tr(B0 B1^-1)
  return 0.5 * (a1 - a0) * (elogdet - p * kLog2) + 0.5 * a1 * (tr - p) +
         0.5 * (a1 * logdet1 - a0 * logdet0) +
         log_multivariate_gamma(p, 0.5 * a0) - log_multivariate_gamma(p, 0.5 * a1);
}

}  // namespace ihmm::vb
