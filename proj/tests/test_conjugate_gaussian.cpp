#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ihmm/conjugate_gaussian.hpp"
#include "ihmm/fsf_logit.hpp"
#include "ihmm/rng.hpp"

#include "support/test_util.hpp"

using namespace ihmm;

namespace {

struct Draw {
  Eigen::VectorXd x;
  double u;
  int z;
};

std::vector<Draw> random_draws(int n, int d, std::uint64_t seed) {
  Philox g(seed, 11);
  std::vector<Draw> out(n);
  for (int i = 0; i < n; ++i) {
    out[i].x = Eigen::VectorXd::NullaryExpr(d, [&](Eigen::Index) { return rnd::normal01(g); });
    out[i].u = 2.0 * rnd::normal01(g) + 0.3;
    out[i].z = rnd::uniform_int(g, 10);
  }
  return out;
}

}  // namespace

TEST_CASE("first point lands in the mirror exactly") {
  conj::SufficientStats st(3);
  Eigen::VectorXd x(3);
  x << 1.5, -2.0, 0.25;
  conj::update_stats(st, x, 4.5, 0);
  CHECK(st.n == 1);
  CHECK(st.xbar == x);
  CHECK(st.ubar == 4.5);
  CHECK(st.cxx.isZero(0.0));
  CHECK(st.cxu.isZero(0.0));
  CHECK(st.cuu == 0.0);
}

TEST_CASE("streamed mirror equals batch central moments") {
  const int n = 50, d = 3;
  auto draws = random_draws(n, d, 41);
  conj::SufficientStats st(d);
  for (const auto& dr : draws) conj::update_stats(st, dr.x, dr.u, dr.z);

  Eigen::VectorXd xbar = Eigen::VectorXd::Zero(d);
  double ubar = 0.0;
  for (const auto& dr : draws) {
    xbar += dr.x;
    ubar += dr.u;
  }
  xbar /= n;
  ubar /= n;
  Eigen::MatrixXd cxx = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd cxu = Eigen::VectorXd::Zero(d);
  double cuu = 0.0;
  for (const auto& dr : draws) {
    Eigen::VectorXd dx = dr.x - xbar;
    cxx += dx * dx.transpose();
    cxu += dx * (dr.u - ubar);
    cuu += (dr.u - ubar) * (dr.u - ubar);
  }
  cxx /= n;
  cxu /= n;
  cuu /= n;

  CHECK(st.xbar.isApprox(xbar, 1e-10));
  CHECK(st.ubar == doctest::Approx(ubar).epsilon(1e-10));
  CHECK(st.cxx.isApprox(cxx, 1e-10));
  CHECK(st.cxu.isApprox(cxu, 1e-10));
  CHECK(st.cuu == doctest::Approx(cuu).epsilon(1e-10));

  // Precision-weighted sums against the direct formula.
  const auto& t = fsf::table();
  Eigen::MatrixXd sxx = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd sxu = Eigen::VectorXd::Zero(d);
  for (const auto& dr : draws) {
    sxx += dr.x * dr.x.transpose() / t.sigma[dr.z];
    sxu += dr.x * ((dr.u - t.mu[dr.z]) / t.sigma[dr.z]);
  }
  CHECK(st.Sxx.isApprox(sxx, 1e-12));
  CHECK(st.SxU.isApprox(sxu, 1e-12));
}

TEST_CASE("zero covariate vector leaves the weighted sums alone") {
  conj::SufficientStats st(2);
  conj::update_stats(st, Eigen::VectorXd::Zero(2), 1.0, 4);
  CHECK(st.Sxx.isZero(0.0));
  CHECK(st.SxU.isZero(0.0));
  CHECK(st.n == 1);
}

TEST_CASE("empty stats reproduce the prior") {
  conj::SufficientStats st(2);
  Eigen::VectorXd lambda(4);
  lambda << 0.7, -0.3, std::log(2.0), std::log(0.5);
  auto post = conj::posterior_gamma(st, lambda, true);
  CHECK(post.mean.isApprox(lambda.head(2), 1e-14));
  Eigen::MatrixXd want = lambda.tail(2).array().exp().matrix().asDiagonal();
  CHECK(post.cov.isApprox(want, 1e-13));
}

TEST_CASE("single scalar observation, solved by hand") {
  // Prior N(0, 1); one unit-precision point with x = 1, weighted value 2:
  // posterior precision 2, mean 1.
  conj::SufficientStats st(1);
  st.n = 1;
  st.Sxx(0, 0) = 1.0;
  st.SxU(0) = 2.0;
  Eigen::VectorXd lambda(2);
  lambda << 0.0, 0.0;
  auto post = conj::posterior_gamma(st, lambda, true);
  CHECK(post.mean(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(post.cov(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("posterior matches a dense batch solve") {
  const int n = 20, d = 3;
  auto draws = random_draws(n, d, 17);
  Philox g(5, 2);
  Eigen::VectorXd lambda(2 * d);
  for (int i = 0; i < d; ++i) {
    lambda[i] = rnd::normal01(g);
    lambda[d + i] = 0.5 * rnd::normal01(g);  // log variances
  }
  conj::SufficientStats st(d);
  for (const auto& dr : draws) conj::update_stats(st, dr.x, dr.u, dr.z);

  const auto& t = fsf::table();
  Eigen::MatrixXd prec = (-lambda.tail(d).array()).exp().matrix().asDiagonal();
  Eigen::VectorXd rhs = prec * lambda.head(d);
  for (const auto& dr : draws) {
    prec += dr.x * dr.x.transpose() / t.sigma[dr.z];
    rhs += dr.x * ((dr.u - t.mu[dr.z]) / t.sigma[dr.z]);
  }
  Eigen::VectorXd mean = prec.ldlt().solve(rhs);
  Eigen::MatrixXd cov = prec.inverse();

  auto post = conj::posterior_gamma(st, lambda, true);
  CHECK(post.mean.isApprox(mean, 1e-9));
  CHECK(post.cov.isApprox(cov, 1e-9));
  Eigen::MatrixXd rebuilt = post.prec_chol * post.prec_chol.transpose();
  CHECK(rebuilt.isApprox(prec, 1e-9));
}

TEST_CASE("update order does not change the posterior") {
  const int n = 30, d = 3;
  auto draws = random_draws(n, d, 91);
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(2 * d);
  conj::SufficientStats a(d), b(d);
  for (const auto& dr : draws) conj::update_stats(a, dr.x, dr.u, dr.z);
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::reverse(idx.begin(), idx.end());
  std::swap(idx[0], idx[7]);
  for (int i : idx) conj::update_stats(b, draws[i].x, draws[i].u, draws[i].z);

  auto pa = conj::posterior_gamma(a, lambda, true);
  auto pb = conj::posterior_gamma(b, lambda, true);
  CHECK(pa.mean.isApprox(pb.mean, 1e-10));
  CHECK(pa.cov.isApprox(pb.cov, 1e-10));
}

TEST_CASE("data only shrinks the posterior covariance") {
  const int d = 3;
  auto draws = random_draws(15, d, 7);
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(2 * d);
  conj::SufficientStats st(d);
  auto prior = conj::posterior_gamma(st, lambda, true);
  for (const auto& dr : draws) conj::update_stats(st, dr.x, dr.u, dr.z);
  auto post = conj::posterior_gamma(st, lambda, true);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(prior.cov - post.cov);
  CHECK(es.eigenvalues().minCoeff() >= -1e-12);
}

TEST_CASE("one-step predictive with no data and zero covariates") {
  conj::SufficientStats st(2);
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(4);
  const auto& t = fsf::table();
  for (int z : {0, 4, 9}) {
    double got = conj::integrated_loglik(st, lambda, Eigen::VectorXd::Zero(2), t.mu[z], z);
    CHECK(got == doctest::Approx(-0.5 * std::log(2.0 * M_PI * t.sigma[z])).epsilon(1e-13));
  }
}

TEST_CASE("one-step predictive equals a ratio of joint evidences") {
  const int d = 2;
  auto draws = random_draws(6, d, 23);
  Philox g(3, 9);
  Eigen::VectorXd lambda(2 * d);
  for (int i = 0; i < d; ++i) {
    lambda[i] = 0.4 * rnd::normal01(g);
    lambda[d + i] = 0.3 * rnd::normal01(g);
  }
  const auto& t = fsf::table();

  // Joint evidence of k points: N(r | X mu0, X S0 X' + diag(sigma_z)) with
  // r_i = u_i - mu_{z_i}.
  auto joint = [&](int k) {
    Eigen::MatrixXd X(k, d);
    Eigen::VectorXd r(k);
    Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(k, k);
    for (int i = 0; i < k; ++i) {
      X.row(i) = draws[i].x.transpose();
      r[i] = draws[i].u - t.mu[draws[i].z];
      noise(i, i) = t.sigma[draws[i].z];
    }
    Eigen::MatrixXd s0 = lambda.tail(d).array().exp().matrix().asDiagonal();
    Eigen::MatrixXd cov = X * s0 * X.transpose() + noise;
    return testutil::log_normal_pdf(r, X * lambda.head(d), cov);
  };

  conj::SufficientStats st(d);
  for (int k = 0; k < 5; ++k) {
    double pred =
        conj::integrated_loglik(st, lambda, draws[k].x, draws[k].u, draws[k].z);
    double want = joint(k + 1) - (k > 0 ? joint(k) : 0.0);
    CHECK(pred == doctest::Approx(want).epsilon(1e-9));
    conj::update_stats(st, draws[k].x, draws[k].u, draws[k].z);
  }
}

TEST_CASE("posterior sampler matches its own mean and covariance") {
  const int d = 2;
  auto draws = random_draws(20, d, 57);
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(2 * d);
  conj::SufficientStats st(d);
  for (const auto& dr : draws) conj::update_stats(st, dr.x, dr.u, dr.z);
  auto post = conj::posterior_gamma(st, lambda, true);

  const int ns = 50000;
  Philox g(12, 4);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  std::vector<Eigen::VectorXd> samples(ns);
  for (int i = 0; i < ns; ++i) {
    samples[i] = conj::sample_gamma(post, g);
    mean += samples[i];
  }
  mean /= ns;
  for (const auto& s : samples) {
    Eigen::VectorXd c = s - mean;
    cov += c * c.transpose();
  }
  cov /= ns;

  for (int i = 0; i < d; ++i) {
    double se = std::sqrt(post.cov(i, i) / ns);
    CHECK(std::abs(mean[i] - post.mean[i]) <= 3.0 * se);
    for (int j = 0; j < d; ++j) {
      double se_c = std::sqrt((post.cov(i, i) * post.cov(j, j) + post.cov(i, j) * post.cov(i, j)) /
                              ns);
      CHECK(std::abs(cov(i, j) - post.cov(i, j)) <= 4.0 * se_c);
    }
  }
}
