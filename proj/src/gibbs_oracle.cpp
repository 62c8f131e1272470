#include "ihmm/gibbs_oracle.hpp"

#include <algorithm>
#include <cmath>

#include "ihmm/conjugate_gaussian.hpp"
#include "ihmm/errors.hpp"
#include "ihmm/fsf_logit.hpp"
#include "ihmm/kernels.hpp"

namespace ihmm::oracle {

TinyInstance bundled_instance() {
  TinyInstance inst;
  inst.K = 2;
  inst.alpha = 1.0;
  // Expected stick split at concentration 1/2, so the fixed-beta truncation
  // lines up with the filter's refreshed stick in expectation.
  inst.beta = Eigen::VectorXd(2);
  inst.beta << 2.0 / 3.0, 1.0 / 3.0;
  inst.n0 = Eigen::MatrixXd::Zero(2, 2);
  inst.n0(0, 0) = 1.0;  // the filter books the first observation as a self-entry
  inst.s1 = 1;
  inst.y = {1, 0, 0};
  // x1 = 0 keeps the first tick uninformative about the emission coefficient,
  // matching the filter's uniform-weight initialization.
  inst.x = Eigen::VectorXd(3);
  inst.x << 0.0, 1.0, 1.0;
  inst.emission = Emission::logit_quadrature;
  inst.emis_mu0 = 0.0;
  inst.emis_var0 = 4.0;
  return inst;
}

void gauss_hermite(int n, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
  // Golub-Welsch on the Hermite Jacobi matrix: off-diagonals sqrt(i/2).
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    double b = std::sqrt(i / 2.0);
    J(i, i - 1) = b;
    J(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  if (es.info() != Eigen::Success) throw NumericError("gauss_hermite: eigensolve failed");
  nodes = es.eigenvalues();
  weights.resize(n);
  const double sqrt_pi = std::sqrt(M_PI);
  for (int i = 0; i < n; ++i) {
    double v0 = es.eigenvectors()(0, i);
    weights[i] = sqrt_pi * v0 * v0;
  }
}

namespace {

double log_group_evidence_state(const TinyInstance& inst, const std::vector<int>& times,
                                int state) {
  if (times.empty()) return 0.0;
  switch (inst.emission) {
    case Emission::fixed_probs: {
      double ll = 0.0;
      for (int t : times) {
        double p1 = inst.state_prob1(state - 1, t);
        ll += inst.y[t] == 1 ? std::log(p1) : std::log1p(-p1);
      }
      return ll;
    }
    case Emission::logit_quadrature: {
      static thread_local int cached_n = 0;
      static thread_local Eigen::VectorXd nodes, weights;
      if (cached_n != inst.quad_points) {
        gauss_hermite(inst.quad_points, nodes, weights);
        cached_n = inst.quad_points;
      }
      const double scale = std::sqrt(2.0 * inst.emis_var0);
      std::vector<double> terms(inst.quad_points);
      for (int i = 0; i < inst.quad_points; ++i) {
        double gamma = inst.emis_mu0 + scale * nodes[i];
        double ll = 0.0;
        for (int t : times) ll += fsf::log_predictive_logistic(gamma * inst.x[t], inst.y[t]);
        terms[i] = std::log(weights[i]) + ll;
      }
      return kernels::logsumexp(terms.data(), terms.size()) - 0.5 * std::log(M_PI);
    }
    case Emission::gaussian_frozen: {
      // chained one-step conditional normals = exact conjugate evidence
      conj::SufficientStats st(1);
      Eigen::VectorXd lambda(2);
      lambda << inst.emis_mu0, std::log(inst.emis_var0);
      Eigen::VectorXd xt(1);
      double ll = 0.0;
      for (int t : times) {
        xt[0] = inst.x[t];
        ll += conj::integrated_loglik(st, lambda, xt, inst.frozen_u[t], inst.frozen_z[t]);
        conj::update_stats(st, xt, inst.frozen_u[t], inst.frozen_z[t]);
      }
      return ll;
    }
  }
  throw NumericError("log_group_evidence: bad emission mode");
}

double log_emission_for_path(const TinyInstance& inst, const std::vector<int>& s) {
  const int T = static_cast<int>(inst.y.size());
  double ll = 0.0;
  for (int k = 1; k <= inst.K; ++k) {
    std::vector<int> times;
    for (int t = 0; t < T; ++t)
      if (s[t] == k) times.push_back(t);
    ll += log_group_evidence_state(inst, times, k);
  }
  return ll;
}

}  // namespace

double log_group_evidence(const TinyInstance& inst, const std::vector<int>& times) {
  return log_group_evidence_state(inst, times, 1);
}

PathDist exact_posterior(const TinyInstance& inst) {
  const int T = static_cast<int>(inst.y.size());
  if (T < 1 || inst.beta.size() != inst.K) throw NumericError("exact_posterior: bad instance");
  PathDist out;
  std::vector<int> s(T, inst.s1);
  std::vector<double> logw;

  // depth-first over s_2..s_T with running transition counts
  Eigen::MatrixXd n = inst.n0;
  auto recurse = [&](auto&& self, int t, double log_prior) -> void {
    if (t == T) {
      out.paths.push_back(s);
      logw.push_back(log_prior + log_emission_for_path(inst, s));
      return;
    }
    int from = s[t - 1];
    double denom = n.row(from - 1).sum() + inst.alpha;
    for (int k = 1; k <= inst.K; ++k) {
      double q = (n(from - 1, k - 1) + inst.alpha * inst.beta[k - 1]) / denom;
      s[t] = k;
      n(from - 1, k - 1) += 1.0;
      self(self, t + 1, log_prior + std::log(q));
      n(from - 1, k - 1) -= 1.0;
    }
    s[t] = inst.s1;
  };
  recurse(recurse, 1, 0.0);

  double lse = kernels::logsumexp(logw.data(), logw.size());
  out.prob.resize(static_cast<Eigen::Index>(logw.size()));
  for (std::size_t i = 0; i < logw.size(); ++i) out.prob[i] = std::exp(logw[i] - lse);
  return out;
}

std::vector<double> site_log_weights(const TinyInstance& inst, const std::vector<int>& s, int t) {
  const int T = static_cast<int>(s.size());
  if (t < 1 || t >= T) throw NumericError("site_log_weights: site out of range");

  // counts with the two transitions touching site t removed
  Eigen::MatrixXd n = inst.n0;
  for (int tau = 1; tau < T; ++tau) {
    if (tau == t || tau == t + 1) continue;
    n(s[tau - 1] - 1, s[tau] - 1) += 1.0;
  }
  const int prev = s[t - 1];
  const int next = (t + 1 < T) ? s[t + 1] : 0;

  // per-state groups excluding site t
  std::vector<std::vector<int>> groups(inst.K);
  for (int tau = 0; tau < T; ++tau)
    if (tau != t) groups[s[tau] - 1].push_back(tau);
  std::vector<double> base(inst.K);
  for (int k = 1; k <= inst.K; ++k) base[k - 1] = log_group_evidence_state(inst, groups[k - 1], k);

  std::vector<double> logw(inst.K);
  for (int k = 1; k <= inst.K; ++k) {
    double in_factor = n(prev - 1, k - 1) + inst.alpha * inst.beta[k - 1];
    double lw = std::log(in_factor);
    if (next != 0) {
      double self_in = (prev == k && next == k) ? 1.0 : 0.0;
      double self_out = (prev == k) ? 1.0 : 0.0;
      double num = n(k - 1, next - 1) + self_in + inst.alpha * inst.beta[next - 1];
      double den = n.row(k - 1).sum() + self_out + inst.alpha;
      lw += std::log(num) - std::log(den);
    }
    std::vector<int>& grp = groups[k - 1];
    grp.push_back(t);
    std::sort(grp.begin(), grp.end());
    lw += log_group_evidence_state(inst, grp, k) - base[k - 1];
    grp.erase(std::find(grp.begin(), grp.end(), t));
    logw[k - 1] = lw;
  }
  return logw;
}

PathDist collapsed_gibbs(const TinyInstance& inst, int sweeps, int burn_in, std::uint64_t seed) {
  const int T = static_cast<int>(inst.y.size());
  std::vector<int> s(T, inst.s1);
  Philox g = substream(seed, {kStreamOracle});
  std::map<std::vector<int>, long> counts;
  long kept = 0;
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    for (int t = 1; t < T; ++t) {
      std::vector<double> lw = site_log_weights(inst, s, t);
      s[t] = 1 + rnd::categorical_log(g, {lw.data(), lw.size()});
    }
    if (sweep >= burn_in) {
      ++counts[s];
      ++kept;
    }
  }
  PathDist out;
  out.prob.resize(static_cast<Eigen::Index>(counts.size()));
  Eigen::Index i = 0;
  for (const auto& [path, c] : counts) {
    out.paths.push_back(path);
    out.prob[i++] = static_cast<double>(c) / static_cast<double>(kept);
  }
  return out;
}

double tv_distance(const PathDist& a, const PathDist& b) {
  std::map<std::vector<int>, double> m;
  for (std::size_t i = 0; i < a.paths.size(); ++i) m[a.paths[i]] += a.prob[i];
  for (std::size_t i = 0; i < b.paths.size(); ++i) m[b.paths[i]] -= b.prob[i];
  double tv = 0.0;
  for (const auto& [_, v] : m) tv += std::abs(v);
  return 0.5 * tv;
}

std::vector<std::vector<double>> marginals(const PathDist& d, int max_state) {
  if (d.paths.empty()) return {};
  const int T = static_cast<int>(d.paths.front().size());
  std::vector<std::vector<double>> out(T, std::vector<double>(max_state, 0.0));
  for (std::size_t i = 0; i < d.paths.size(); ++i)
    for (int t = 0; t < T; ++t) {
      int s = d.paths[i][t];
      if (s >= 1 && s <= max_state) out[t][s - 1] += d.prob[i];
    }
  return out;
}

double max_marginal_tv(const std::vector<std::vector<double>>& a,
                       const std::vector<std::vector<double>>& b) {
  double worst = 0.0;
  for (std::size_t t = 0; t < a.size() && t < b.size(); ++t) {
    double tv = 0.0;
    for (std::size_t k = 0; k < a[t].size() && k < b[t].size(); ++k)
      tv += std::abs(a[t][k] - b[t][k]);
    worst = std::max(worst, 0.5 * tv);
  }
  return worst;
}

}  // namespace ihmm::oracle
