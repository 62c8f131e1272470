#include "ihmm/conjugate_gaussian.hpp"

#include <cmath>

#include "ihmm/errors.hpp"

namespace ihmm::conj {

SufficientStats::SufficientStats(int d)
    : Sxx(Eigen::MatrixXd::Zero(d, d)),
      SxU(Eigen::VectorXd::Zero(d)),
      xbar(Eigen::VectorXd::Zero(d)),
      cxx(Eigen::MatrixXd::Zero(d, d)),
      cxu(Eigen::VectorXd::Zero(d)) {}

void update_stats(SufficientStats& st, const Eigen::VectorXd& x, double u, int z) {
  const auto& t = fsf::table();
  double inv_var = 1.0 / t.sigma[z];
  st.Sxx.selfadjointView<Eigen::Lower>().rankUpdate(x, inv_var);
  st.Sxx.triangularView<Eigen::StrictlyUpper>() = st.Sxx.transpose();
  st.SxU.noalias() += x * ((u - t.mu[z]) * inv_var);

  // mirror in t/(t+1) form
  double tn = static_cast<double>(st.n);
  double w = tn / (tn + 1.0);
  Eigen::VectorXd dx = x - st.xbar;
  double du = u - st.ubar;
  st.cxx = (st.cxx * tn + dx * dx.transpose() * w) / (tn + 1.0);
  st.cxu = (st.cxu * tn + dx * (du * w)) / (tn + 1.0);
  st.cuu = (st.cuu * tn + du * du * w) / (tn + 1.0);
  st.xbar += dx / (tn + 1.0);
  st.ubar += du / (tn + 1.0);
  ++st.n;
}

namespace {

void split_lambda(const Eigen::VectorXd& lambda, Eigen::VectorXd& mu0, Eigen::VectorXd& prec0) {
  Eigen::Index d2 = lambda.size();
  if (d2 % 2 != 0) throw NumericError("lambda: length must be 2d");
  Eigen::Index d = d2 / 2;
  mu0 = lambda.head(d);
  prec0 = (-lambda.tail(d).array()).exp().matrix();  // 1 / exp(log var)
}

}  // namespace

GammaPosterior posterior_gamma(const SufficientStats& st, const Eigen::VectorXd& lambda,
                               bool need_cov) {
  Eigen::VectorXd mu0, prec0;
  split_lambda(lambda, mu0, prec0);
  if (mu0.size() != st.SxU.size()) throw NumericError("posterior_gamma: dimension mismatch");

  Eigen::MatrixXd prec = st.Sxx;
  prec.diagonal() += prec0;
  Eigen::LLT<Eigen::MatrixXd> llt(prec);
  if (llt.info() != Eigen::Success) throw NumericError("posterior_gamma: precision not SPD");

  GammaPosterior post;
  post.mean = llt.solve(prec0.asDiagonal() * mu0 + st.SxU);
  post.prec_chol = llt.matrixL();
  if (need_cov) post.cov = llt.solve(Eigen::MatrixXd::Identity(prec.rows(), prec.cols()));
  return post;
}

double integrated_loglik(const SufficientStats& st, const Eigen::VectorXd& lambda,
                         const Eigen::VectorXd& x, double u, int z) {
  const auto& t = fsf::table();
  GammaPosterior post = posterior_gamma(st, lambda);
  double m = post.mean.dot(x);
  // x' P^{-1} x = || L^{-1} x ||^2 with P = L L'
  Eigen::VectorXd w = post.prec_chol.triangularView<Eigen::Lower>().solve(x);
  double v = w.squaredNorm() + t.sigma[z];
  double r = (u - t.mu[z]) - m;
  return -0.5 * std::log(2.0 * M_PI * v) - 0.5 * r * r / v;
}

Eigen::VectorXd sample_gamma(const GammaPosterior& post, Philox& g) {
  Eigen::VectorXd z(post.mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rnd::normal01(g);
  // prec = L L'; cov = L^{-T} L^{-1}; x = mean + L^{-T} z
  return post.mean + post.prec_chol.transpose().triangularView<Eigen::Upper>().solve(z);
}

}  // namespace ihmm::conj
