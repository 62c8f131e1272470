#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>
#include <vector>

#include "ihmm/errors.hpp"
#include "ihmm/fsf_logit.hpp"
#include "ihmm/gibbs_oracle.hpp"
#include "ihmm/kernels.hpp"

#include "support/test_util.hpp"

using namespace ihmm;

namespace {

// Second-opinion evidence for one state group: plain trapezoid over the
// scalar prior instead of Gauss-Hermite / conjugate chaining. The integrand
// decays like the Gaussian prior, so the rule is spectrally accurate here.
double trap_evidence(const oracle::TinyInstance& inst, const std::vector<int>& times) {
  if (times.empty()) return 1.0;
  const int pts = 4001;
  const auto& tab = fsf::table();
  double sd = std::sqrt(inst.emis_var0);
  double lo = inst.emis_mu0 - 12.0 * sd, hi = inst.emis_mu0 + 12.0 * sd;
  double h = (hi - lo) / (pts - 1);
  double acc = 0.0;
  for (int i = 0; i < pts; ++i) {
    double gam = lo + i * h;
    double zz = (gam - inst.emis_mu0) / sd;
    double f = std::exp(-0.5 * zz * zz) / (sd * std::sqrt(2.0 * M_PI));
    for (int t : times) {
      if (inst.emission == oracle::Emission::logit_quadrature) {
        double p1 = 1.0 / (1.0 + std::exp(-gam * inst.x[t]));
        f *= inst.y[t] == 1 ? p1 : 1.0 - p1;
      } else {  // gaussian_frozen
        double r = inst.frozen_u[t] - tab.mu[inst.frozen_z[t]] - gam * inst.x[t];
        double v = tab.sigma[inst.frozen_z[t]];
        f *= std::exp(-0.5 * r * r / v) / std::sqrt(2.0 * M_PI * v);
      }
    }
    acc += (i == 0 || i == pts - 1 ? 0.5 : 1.0) * f;
  }
  return acc * h;
}

// Independent enumeration: odometer over the free sites, sequential urn
// prior, per-group emission evidence by trapezoid (or directly for fixed
// probabilities). Returns normalized path probabilities keyed by path.
std::map<std::vector<int>, double> enumerate_paths(const oracle::TinyInstance& inst) {
  const int T = static_cast<int>(inst.y.size());
  long total = 1;
  for (int i = 1; i < T; ++i) total *= inst.K;
  std::map<std::vector<int>, double> out;
  double z = 0.0;
  for (long code = 0; code < total; ++code) {
    std::vector<int> s(T, inst.s1);
    long c = code;
    for (int t = 1; t < T; ++t) {
      s[t] = 1 + static_cast<int>(c % inst.K);
      c /= inst.K;
    }
    Eigen::MatrixXd n = inst.n0;
    double prior = 1.0;
    for (int t = 1; t < T; ++t) {
      double denom = n.row(s[t - 1] - 1).sum() + inst.alpha;
      prior *= (n(s[t - 1] - 1, s[t] - 1) + inst.alpha * inst.beta[s[t] - 1]) / denom;
      n(s[t - 1] - 1, s[t] - 1) += 1.0;
    }
    double em = 1.0;
    for (int k = 1; k <= inst.K; ++k) {
      std::vector<int> times;
      for (int t = 0; t < T; ++t)
        if (s[t] == k) times.push_back(t);
      if (inst.emission == oracle::Emission::fixed_probs) {
        for (int t : times) {
          double p1 = inst.state_prob1(k - 1, t);
          em *= inst.y[t] == 1 ? p1 : 1.0 - p1;
        }
      } else {
        em *= trap_evidence(inst, times);
      }
    }
    out[s] = prior * em;
    z += prior * em;
  }
  for (auto& [path, v] : out) v /= z;
  return out;
}

double enum_tv(const oracle::PathDist& got, const std::map<std::vector<int>, double>& want) {
  std::map<std::vector<int>, double> m = want;
  for (std::size_t i = 0; i < got.paths.size(); ++i) m[got.paths[i]] -= got.prob[i];
  double tv = 0.0;
  for (const auto& [_, v] : m) tv += std::abs(v);
  return 0.5 * tv;
}

oracle::TinyInstance frozen_instance() {
  oracle::TinyInstance inst;
  inst.K = 2;
  inst.alpha = 1.3;
  inst.beta = Eigen::VectorXd(2);
  inst.beta << 0.6, 0.4;
  inst.n0 = Eigen::MatrixXd::Zero(2, 2);
  inst.n0(0, 0) = 1.0;
  inst.y = {1, 0, 0};
  inst.x = Eigen::VectorXd(3);
  inst.x << 1.0, 1.5, 0.7;
  inst.emission = oracle::Emission::gaussian_frozen;
  inst.emis_mu0 = 0.2;
  inst.emis_var0 = 1.5;
  inst.frozen_u = {0.8, -0.3, 1.2};
  inst.frozen_z = {3, 6, 1};
  return inst;
}

}  // namespace

TEST_CASE("Gauss-Hermite rule integrates low moments exactly") {
  for (int n : {8, 64}) {
    Eigen::VectorXd nodes, weights;
    oracle::gauss_hermite(n, nodes, weights);
    double m0 = 0.0, m1 = 0.0, m2 = 0.0, m6 = 0.0;
    for (int i = 0; i < n; ++i) {
      m0 += weights[i];
      m1 += weights[i] * nodes[i];
      m2 += weights[i] * nodes[i] * nodes[i];
      m6 += weights[i] * std::pow(nodes[i], 6);
    }
    double sp = std::sqrt(M_PI);
    CHECK(m0 == doctest::Approx(sp).epsilon(1e-12));
    CHECK(std::abs(m1) <= 1e-12);
    CHECK(m2 == doctest::Approx(sp / 2.0).epsilon(1e-12));
    CHECK(m6 == doctest::Approx(15.0 * sp / 8.0).epsilon(1e-11));
  }
}

TEST_CASE("single time point has a point-mass posterior") {
  oracle::TinyInstance inst = oracle::bundled_instance();
  inst.y = {1};
  inst.x = Eigen::VectorXd::Ones(1);
  oracle::PathDist d = oracle::exact_posterior(inst);
  REQUIRE(d.paths.size() == 1);
  CHECK(d.paths[0] == std::vector<int>{1});
  CHECK(d.prob[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("uniform emissions reduce the posterior to the urn prior") {
  oracle::TinyInstance inst;
  inst.K = 2;
  inst.alpha = 1.0;
  inst.beta = Eigen::VectorXd::Constant(2, 0.5);
  inst.n0 = Eigen::MatrixXd::Zero(2, 2);
  inst.n0(0, 0) = 1.0;
  inst.y = {1, 0};
  inst.x = Eigen::VectorXd::Ones(2);
  inst.emission = oracle::Emission::fixed_probs;
  inst.state_prob1 = Eigen::MatrixXd::Constant(2, 2, 0.5);
  oracle::PathDist d = oracle::exact_posterior(inst);
  REQUIRE(d.paths.size() == 2);
  // Hand prior: p(s2 = 1) = (1 + 0.5) / (1 + 1) = 3/4.
  for (std::size_t i = 0; i < d.paths.size(); ++i) {
    double want = d.paths[i][1] == 1 ? 0.75 : 0.25;
    CHECK(d.prob[i] == doctest::Approx(want).epsilon(1e-14));
  }
}

TEST_CASE("exact posterior agrees with the independent enumerator") {
  // Bundled logit instance.
  oracle::TinyInstance inst = oracle::bundled_instance();
  oracle::PathDist d = oracle::exact_posterior(inst);
  CHECK(d.paths.size() == 4);
  CHECK(d.prob.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(enum_tv(d, enumerate_paths(inst)) <= 1e-8);

  // Uneven covariates and outcomes. The x = 2 site needs a denser rule: at
  // 64 nodes the Hermite error is ~1e-6, well above the comparison floor.
  inst.x << 1.0, 0.5, 2.0;
  inst.y = {1, 0, 1};
  inst.emis_mu0 = -0.3;
  inst.quad_points = 256;
  CHECK(enum_tv(oracle::exact_posterior(inst), enumerate_paths(inst)) <= 1e-8);

  // Larger truncation with fixed probabilities: exact to rounding.
  oracle::TinyInstance fp;
  fp.K = 3;
  fp.alpha = 0.8;
  fp.beta = Eigen::VectorXd(3);
  fp.beta << 0.5, 0.3, 0.2;
  fp.n0 = Eigen::MatrixXd::Zero(3, 3);
  fp.n0(0, 0) = 1.0;
  fp.y = {1, 0, 1, 1};
  fp.x = Eigen::VectorXd::Ones(4);
  fp.emission = oracle::Emission::fixed_probs;
  fp.state_prob1 = Eigen::MatrixXd(3, 4);
  fp.state_prob1 << 0.8, 0.8, 0.7, 0.9, 0.3, 0.25, 0.4, 0.2, 0.55, 0.5, 0.5, 0.6;
  oracle::PathDist dfp = oracle::exact_posterior(fp);
  CHECK(dfp.paths.size() == 27);
  CHECK(enum_tv(dfp, enumerate_paths(fp)) <= 1e-12);

  // Frozen Gaussian augmentation.
  oracle::TinyInstance fz = frozen_instance();
  CHECK(enum_tv(oracle::exact_posterior(fz), enumerate_paths(fz)) <= 1e-8);
}

TEST_CASE("frozen-mode group evidence matches the closed form") {
  oracle::TinyInstance inst = frozen_instance();
  const auto& tab = fsf::table();
  for (const std::vector<int>& times :
       std::vector<std::vector<int>>{{0}, {1}, {0, 2}, {0, 1, 2}}) {
    int k = static_cast<int>(times.size());
    Eigen::VectorXd r(k), mean(k);
    Eigen::MatrixXd cov(k, k);
    for (int i = 0; i < k; ++i) {
      r[i] = inst.frozen_u[times[i]] - tab.mu[inst.frozen_z[times[i]]];
      mean[i] = inst.emis_mu0 * inst.x[times[i]];
      for (int j = 0; j < k; ++j)
        cov(i, j) = inst.emis_var0 * inst.x[times[i]] * inst.x[times[j]];
      cov(i, i) += tab.sigma[inst.frozen_z[times[i]]];
    }
    double want = testutil::log_normal_pdf(r, mean, cov);
    CHECK(oracle::log_group_evidence(inst, times) == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("site conditionals match the enumerated conditionals") {
  for (oracle::TinyInstance inst :
       {oracle::bundled_instance(), frozen_instance()}) {
    auto full = enumerate_paths(inst);
    const int T = static_cast<int>(inst.y.size());
    // A few anchor configurations, all sites, all destination states.
    for (std::vector<int> s : std::vector<std::vector<int>>{
             {1, 1, 1}, {1, 2, 1}, {1, 1, 2}, {1, 2, 2}}) {
      for (int t = 1; t < T; ++t) {
        std::vector<double> lw = oracle::site_log_weights(inst, s, t);
        REQUIRE(static_cast<int>(lw.size()) == inst.K);
        // Normalize both sides over the K choices at site t.
        std::vector<double> joint(inst.K);
        double z = 0.0;
        for (int k = 1; k <= inst.K; ++k) {
          std::vector<int> sk = s;
          sk[t] = k;
          joint[k - 1] = full.at(sk);
          z += joint[k - 1];
        }
        double lse = kernels::logsumexp(lw.data(), lw.size());
        for (int k = 0; k < inst.K; ++k)
          CHECK(std::exp(lw[k] - lse) == doctest::Approx(joint[k] / z).epsilon(1e-8));
      }
    }
  }
}

TEST_CASE("hand-checked site weights under fixed probabilities") {
  oracle::TinyInstance inst;
  inst.K = 2;
  inst.alpha = 1.0;
  inst.beta = Eigen::VectorXd::Constant(2, 0.5);
  inst.n0 = Eigen::MatrixXd::Zero(2, 2);
  inst.n0(0, 0) = 1.0;
  inst.y = {1, 0, 1, 0};
  inst.x = Eigen::VectorXd::Ones(4);
  inst.emission = oracle::Emission::fixed_probs;
  inst.state_prob1 = Eigen::MatrixXd(2, 4);
  inst.state_prob1 << 0.7, 0.7, 0.7, 0.7, 0.2, 0.2, 0.2, 0.2;

  // Path (1, ?, 1, 2), site t = 1: prev = 1, next = 1. With the two site
  // transitions removed the counts keep only (s3 -> s4) = (1 -> 2), so
  // n = [[1, 1], [0, 0]].
  std::vector<int> s = {1, 1, 1, 2};
  auto lw = oracle::site_log_weights(inst, s, 1);
  // k = 1: into = 1 + 0.5; out: num = 1 + 1 (self in) + 0.5,
  //        den = 2 + 1 (self out) + 1.
  double want1 = std::log(1.5) + std::log(2.5 / 4.0) + std::log(1.0 - 0.7);
  // k = 2: into = 1 + 0.5; out: num = 0 + 0.5, den = 0 + 1.
  double want2 = std::log(1.5) + std::log(0.5 / 1.0) + std::log(1.0 - 0.2);
  CHECK(lw[0] == doctest::Approx(want1).epsilon(1e-12));
  CHECK(lw[1] == doctest::Approx(want2).epsilon(1e-12));

  // Terminal site t = 3: no outgoing factor; the kept transitions are the
  // two (1 -> 1) hops, so n = [[3, 0], [0, 0]] and prev = 1.
  lw = oracle::site_log_weights(inst, s, 3);
  double w1 = std::log(3.0 + 0.5) + std::log(1.0 - 0.7);
  double w2 = std::log(0.5) + std::log(1.0 - 0.2);
  CHECK(lw[0] == doctest::Approx(w1).epsilon(1e-12));
  CHECK(lw[1] == doctest::Approx(w2).epsilon(1e-12));

  CHECK_THROWS_AS(oracle::site_log_weights(inst, s, 0), NumericError);
  CHECK_THROWS_AS(oracle::site_log_weights(inst, s, 4), NumericError);
}

TEST_CASE("degenerate truncation forces the constant sampler") {
  oracle::TinyInstance inst;
  inst.K = 1;
  inst.alpha = 0.7;
  inst.beta = Eigen::VectorXd::Ones(1);
  inst.n0 = Eigen::MatrixXd::Constant(1, 1, 1.0);
  inst.y = {1, 0, 0};
  inst.x = Eigen::VectorXd::Ones(3);
  oracle::PathDist exact = oracle::exact_posterior(inst);
  REQUIRE(exact.paths.size() == 1);
  CHECK(exact.prob[0] == doctest::Approx(1.0));
  oracle::PathDist gibbs = oracle::collapsed_gibbs(inst, 50, 10, 3);
  REQUIRE(gibbs.paths.size() == 1);
  CHECK(gibbs.paths[0] == std::vector<int>{1, 1, 1});
  CHECK(oracle::tv_distance(exact, gibbs) <= 1e-15);
}

TEST_CASE("collapsed Gibbs converges to the exact posterior") {
  oracle::TinyInstance inst = oracle::bundled_instance();
  oracle::PathDist exact = oracle::exact_posterior(inst);
  oracle::PathDist gibbs = oracle::collapsed_gibbs(inst, 30000, 2000, 17);
  CHECK(oracle::tv_distance(exact, gibbs) < 0.05);
  CHECK(oracle::max_marginal_tv(oracle::marginals(exact, 2), oracle::marginals(gibbs, 2)) <
        0.05);

  oracle::TinyInstance fz = frozen_instance();
  CHECK(oracle::tv_distance(oracle::exact_posterior(fz),
                            oracle::collapsed_gibbs(fz, 30000, 2000, 23)) < 0.05);
}

TEST_CASE("distribution utilities behave") {
  oracle::PathDist a;
  a.paths = {{1, 1}, {1, 2}};
  a.prob = Eigen::VectorXd(2);
  a.prob << 0.5, 0.5;
  CHECK(oracle::tv_distance(a, a) == 0.0);
  oracle::PathDist b;
  b.paths = {{2, 1}, {2, 2}};
  b.prob = a.prob;
  CHECK(oracle::tv_distance(a, b) == doctest::Approx(1.0));
  oracle::PathDist c;
  c.paths = {{1, 1}};
  c.prob = Eigen::VectorXd::Ones(1);
  CHECK(oracle::tv_distance(a, c) == doctest::Approx(0.5));

  auto m = oracle::marginals(a, 2);
  REQUIRE(m.size() == 2);
  CHECK(m[0][0] == doctest::Approx(1.0));
  CHECK(m[1][0] == doctest::Approx(0.5));
  CHECK(m[1][1] == doctest::Approx(0.5));
  CHECK(oracle::max_marginal_tv(m, m) == 0.0);
  CHECK(oracle::max_marginal_tv(m, oracle::marginals(b, 2)) == doctest::Approx(1.0));
}
