#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <vector>

#include "ihmm/errors.hpp"
#include "ihmm/ihmm_transition.hpp"
#include "ihmm/kernels.hpp"
#include "ihmm/rng.hpp"

#include "support/test_util.hpp"

using namespace ihmm;

namespace {

// Trapezoid mean of x under an unnormalized log density on [lo, hi].
double quadrature_mean(const std::function<double(double)>& log_f, double lo, double hi,
                       int pts) {
  double h = (hi - lo) / (pts - 1);
  std::vector<double> lf(pts);
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < pts; ++i) {
    lf[i] = log_f(lo + i * h);
    best = std::max(best, lf[i]);
  }
  double z = 0.0, zx = 0.0;
  for (int i = 0; i < pts; ++i) {
    double w = (i == 0 || i == pts - 1) ? 0.5 : 1.0;
    double f = w * std::exp(lf[i] - best);
    z += f;
    zx += f * (lo + i * h);
  }
  return zx / z;
}

}  // namespace

TEST_CASE("no counts reduce the law to beta itself") {
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(2, 2);
  Eigen::VectorXd beta(3);
  beta << 0.3, 0.5, 0.2;
  double out[3];
  trans::transition_probs(n, beta, 1.0, 1, out);
  CHECK(out[0] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(out[2] == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("single state with one self count, solved by hand") {
  Eigen::MatrixXd n(1, 1);
  n << 1.0;
  Eigen::VectorXd beta(2);
  beta << 0.5, 0.5;
  double out[2];
  trans::transition_probs(n, beta, 1.0, 1, out);
  CHECK(out[0] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(trans::transition_prob_to(n, beta, 1.0, 1, 1) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(trans::transition_prob_to(n, beta, 1.0, 1, 2) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("concentration limits") {
  Eigen::MatrixXd n(2, 2);
  n << 2.0, 1.0, 0.0, 4.0;
  Eigen::VectorXd beta(3);
  beta << 0.4, 0.35, 0.25;
  double out[3];
  // Huge alpha washes the counts out.
  trans::transition_probs(n, beta, 1e9, 1, out);
  for (int j = 0; j < 3; ++j) CHECK(std::abs(out[j] - beta[j]) <= 1e-6);
  // Tiny alpha leaves the empirical row.
  trans::transition_probs(n, beta, 1e-12, 1, out);
  CHECK(out[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
  CHECK(out[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  CHECK(out[2] <= 1e-12);
}

TEST_CASE("random configurations sum to one and match the formula") {
  Philox g(31, 1);
  for (int rep = 0; rep < 50; ++rep) {
    int L = 1 + rnd::uniform_int(g, 6);
    Eigen::MatrixXd n(L, L);
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j) n(i, j) = rnd::uniform_int(g, 8);
    std::vector<double> conc(L + 1, 1.0);
    Eigen::VectorXd beta(L + 1);
    rnd::dirichlet(g, conc, {beta.data(), static_cast<std::size_t>(L + 1)});
    double alpha = 0.1 + 5.0 * rnd::u01(g);
    int from = 1 + rnd::uniform_int(g, L);

    std::vector<double> out(L + 1);
    trans::transition_probs(n, beta, alpha, from, out.data());
    double sum = 0.0, denom = n.row(from - 1).sum() + alpha;
    for (int j = 0; j <= L; ++j) {
      sum += out[j];
      double want = j < L ? (n(from - 1, j) + alpha * beta[j]) / denom
                          : alpha * beta[L] / denom;
      CHECK(out[j] == doctest::Approx(want).epsilon(1e-12));
      CHECK(trans::transition_prob_to(n, beta, alpha, from, j + 1) ==
            doctest::Approx(out[j]).epsilon(1e-12));
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("bad indices and shapes are rejected") {
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(2, 2);
  Eigen::VectorXd beta = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
  double out[3];
  CHECK_THROWS_AS(trans::transition_probs(n, beta, 1.0, 0, out), NumericError);
  CHECK_THROWS_AS(trans::transition_probs(n, beta, 1.0, 3, out), NumericError);
  CHECK_THROWS_AS(trans::transition_probs(n, Eigen::VectorXd::Ones(2), 1.0, 1, out),
                  NumericError);
  CHECK_THROWS_AS(trans::transition_prob_to(n, beta, 1.0, 1, 4), NumericError);
}

TEST_CASE("stick split conserves mass and places the slots") {
  Eigen::VectorXd beta(3);
  beta << 0.5, 0.3, 0.2;
  Eigen::VectorXd grown = trans::grow_beta(beta, 0.25);
  REQUIRE(grown.size() == 4);
  CHECK(grown[0] == 0.5);
  CHECK(grown[1] == 0.3);
  CHECK(grown[2] == 0.25 * 0.2);
  CHECK(grown[3] == 0.75 * 0.2);
  CHECK(std::abs(grown.sum() - 1.0) <= 1e-15);

  Eigen::VectorXd all = trans::grow_beta(beta, 1.0);
  CHECK(all[2] == 0.2);
  CHECK(all[3] == 0.0);
  Eigen::VectorXd none = trans::grow_beta(beta, 0.0);
  CHECK(none[2] == 0.0);
  CHECK(none[3] == 0.2);
  CHECK_THROWS_AS(trans::grow_beta(beta, 1.5), NumericError);
  CHECK_THROWS_AS(trans::grow_beta(beta, -0.1), NumericError);
}

TEST_CASE("small unsigned Stirling numbers are exact") {
  trans::StirlingCache cache;
  CHECK(cache.log_s(0, 0) == 0.0);
  CHECK(cache.log_s(1, 0) == -std::numeric_limits<double>::infinity());
  CHECK(cache.log_s(2, 3) == -std::numeric_limits<double>::infinity());
  const std::vector<std::vector<double>> want = {
      {2, 3, 1},          // n = 3
      {6, 11, 6, 1},      // n = 4
      {24, 50, 35, 10, 1} // n = 5
  };
  for (int n = 3; n <= 5; ++n)
    for (int m = 1; m <= n; ++m)
      CHECK(std::exp(cache.log_s(n, m)) ==
            doctest::Approx(want[n - 3][m - 1]).epsilon(1e-12));
  // Leading coefficient is exactly one, first column is (n-1)!.
  for (int n : {1, 7, 42, 500}) {
    CHECK(cache.log_s(n, n) == 0.0);
    CHECK(cache.log_s(n, 1) == doctest::Approx(std::lgamma(n)).epsilon(1e-12));
  }
}

TEST_CASE("row sums reproduce rising factorials up to n = 500") {
  trans::StirlingCache cache;
  cache.ensure(500);
  for (int n : {10, 137, 500}) {
    for (double x : {1.0, 2.0, 3.5}) {
      std::vector<double> lw(n);
      for (int m = 1; m <= n; ++m) lw[m - 1] = cache.log_s(n, m) + m * std::log(x);
      double got = kernels::logsumexp(lw.data(), lw.size());
      double want = std::lgamma(x + n) - std::lgamma(x);
      CHECK(got == doctest::Approx(want).epsilon(1e-10));
    }
  }
}

TEST_CASE("table count sampler hits the closed-form pmf at n = 3") {
  trans::StirlingCache cache;
  Philox g(8, 2);
  CHECK(trans::sample_m(0, 1.0, cache, g) == 0);
  for (int i = 0; i < 20; ++i) CHECK(trans::sample_m(1, 2.7, cache, g) == 1);
  // S(3, .) = (2, 3, 1); at alpha beta = 1 the pmf is (1/3, 1/2, 1/6).
  const int ns = 120000;
  std::array<int, 4> cnt{};
  for (int i = 0; i < ns; ++i) ++cnt[trans::sample_m(3, 1.0, cache, g)];
  std::array<double, 3> p = {1.0 / 3.0, 0.5, 1.0 / 6.0};
  for (int m = 1; m <= 3; ++m) {
    double freq = static_cast<double>(cnt[m]) / ns;
    double se = std::sqrt(p[m - 1] * (1.0 - p[m - 1]) / ns);
    CHECK(std::abs(freq - p[m - 1]) <= 3.0 * se);
  }
}

TEST_CASE("table count sampler stays in range at the extremes") {
  trans::StirlingCache cache;
  Philox g(9, 5);
  const int n = 1500;
  for (int i = 0; i < 10; ++i) {
    int lo = trans::sample_m(n, 1e-9, cache, g);
    CHECK(lo >= 1);
    CHECK(lo <= 3);  // essentially always one table
    int hi = trans::sample_m(n, 1e9, cache, g);
    CHECK(hi >= n - 3);  // essentially always n tables
    CHECK(hi <= n);
  }
  CHECK(trans::sample_m(5, 0.0, cache, g) == 1);
  CHECK_THROWS_AS(trans::sample_m(-1, 1.0, cache, g), NumericError);
}

TEST_CASE("stick refresh given tables is the expected Dirichlet") {
  Philox g(14, 3);
  Eigen::MatrixXd m(1, 1);
  m << 3.0;
  const int ns = 20000;
  double mean0 = 0.0;
  for (int i = 0; i < ns; ++i) {
    Eigen::VectorXd beta = trans::sample_beta_given_m(m, 1.0, g);
    REQUIRE(beta.size() == 2);
    CHECK(std::abs(beta.sum() - 1.0) <= 1e-12);
    mean0 += beta[0];
  }
  mean0 /= ns;
  // Dir(3, 1) first coordinate: mean 3/4, var 3/80.
  double se = std::sqrt(3.0 / 80.0 / ns);
  CHECK(std::abs(mean0 - 0.75) <= 3.0 * se);
  CHECK_THROWS_AS(trans::sample_beta_given_m(m, 0.0, g), NumericError);
}

TEST_CASE("zero table columns clamp and count instead of failing") {
  Philox g(15, 3);
  Eigen::MatrixXd m(2, 2);
  m << 3.0, 0.0, 0.0, 0.0;
  long before = trans::beta_clamp_count();
  Eigen::VectorXd beta = trans::sample_beta_given_m(m, 2.0, g);
  CHECK(trans::beta_clamp_count() == before + 1);
  REQUIRE(beta.size() == 3);
  CHECK(beta[1] == 0.0);
  CHECK(std::abs(beta.sum() - 1.0) <= 1e-12);
}

TEST_CASE("stick concentration refresh has the right stationary mean") {
  const double a = 2.0, b = 1.0;
  const int L = 3;
  const double m_total = 20.0;
  auto log_target = [&](double lam) {
    return (a + L - 1.0) * std::log(lam) - b * lam + std::lgamma(lam) -
           std::lgamma(lam + m_total);
  };
  double want = quadrature_mean(log_target, 1e-8, 60.0, 200001);

  const int chains = 30, sweeps = 2500, burn = 500;
  std::vector<double> chain_mean(chains);
  for (int c = 0; c < chains; ++c) {
    Philox g(777, static_cast<std::uint64_t>(c));
    double lam = 1.0, acc = 0.0;
    for (int s = 0; s < sweeps; ++s) {
      lam = trans::sample_lambda(lam, L, m_total, a, b, g);
      CHECK(lam > 0.0);
      if (s >= burn) acc += lam;
    }
    chain_mean[c] = acc / (sweeps - burn);
  }
  auto [mean, se] = testutil::mean_se(chain_mean);
  CHECK(std::abs(mean - want) <= 3.5 * se);
}

TEST_CASE("stick concentration refresh with no tables is the prior") {
  Philox g(21, 6);
  const double a = 3.0, b = 2.0;
  const int ns = 40000;
  std::vector<double> draws(ns);
  for (int i = 0; i < ns; ++i) draws[i] = trans::sample_lambda(5.0, 4, 0.0, a, b, g);
  auto [mean, se] = testutil::mean_se(draws);
  CHECK(std::abs(mean - a / b) <= 3.0 * se);
}

TEST_CASE("transition concentration refresh has the right stationary mean") {
  const double a = 1.5, b = 0.5;
  Eigen::VectorXd rows(4);
  rows << 5.0, 3.0, 0.0, 8.0;
  const double m_total = 6.0;
  auto log_target = [&](double al) {
    double lp = (a + m_total - 1.0) * std::log(al) - b * al;
    for (int i = 0; i < rows.size(); ++i)
      if (rows[i] > 0.0) lp += std::lgamma(al) - std::lgamma(al + rows[i]);
    return lp;
  };
  double want = quadrature_mean(log_target, 1e-8, 80.0, 200001);

  const int chains = 30, sweeps = 2500, burn = 500;
  std::vector<double> chain_mean(chains);
  for (int c = 0; c < chains; ++c) {
    Philox g(991, static_cast<std::uint64_t>(c));
    double al = 1.0, acc = 0.0;
    for (int s = 0; s < sweeps; ++s) {
      al = trans::sample_alpha(al, rows, m_total, a, b, g);
      CHECK(al > 0.0);
      if (s >= burn) acc += al;
    }
    chain_mean[c] = acc / (sweeps - burn);
  }
  auto [mean, se] = testutil::mean_se(chain_mean);
  CHECK(std::abs(mean - want) <= 3.5 * se);
}

TEST_CASE("transition concentration refresh with empty rows is the prior") {
  Philox g(22, 6);
  const double a = 2.5, b = 4.0;
  Eigen::VectorXd rows = Eigen::VectorXd::Zero(3);
  const int ns = 40000;
  std::vector<double> draws(ns);
  Eigen::VectorXd gv, hv;
  for (int i = 0; i < ns; ++i) {
    draws[i] = trans::sample_alpha(1.0, rows, 0.0, a, b, g, &gv, &hv);
    if (i == 0) {
      CHECK(gv == Eigen::VectorXd::Ones(3));
      CHECK(hv == Eigen::VectorXd::Zero(3));
    }
  }
  auto [mean, se] = testutil::mean_se(draws);
  CHECK(std::abs(mean - a / b) <= 3.0 * se);
}
