#include "ihmm/ihmm_transition.hpp"

#include <atomic>
#include <cmath>
#include <limits>

#include "ihmm/errors.hpp"

namespace ihmm::trans {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double logaddexp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = a > b ? a : b;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

std::atomic<long> g_beta_clamps{0};
}  // namespace

void transition_probs(const Eigen::MatrixXd& n, const Eigen::VectorXd& beta, double alpha,
                      int from, double* out) {
  const Eigen::Index L = n.rows();
  if (from < 1 || from > L) throw NumericError("transition_probs: from out of range");
  if (beta.size() != L + 1) throw NumericError("transition_probs: beta must have L+1 entries");
  double denom = n.row(from - 1).sum() + alpha;
  for (Eigen::Index j = 0; j < L; ++j) out[j] = (n(from - 1, j) + alpha * beta[j]) / denom;
  out[L] = alpha * beta[L] / denom;
}

double transition_prob_to(const Eigen::MatrixXd& n, const Eigen::VectorXd& beta, double alpha,
                          int from, int to) {
  const Eigen::Index L = n.rows();
  if (from < 1 || from > L || to < 1 || to > L + 1)
    throw NumericError("transition_prob_to: index out of range");
  double denom = n.row(from - 1).sum() + alpha;
  if (to == L + 1) return alpha * beta[L] / denom;
  return (n(from - 1, to - 1) + alpha * beta[to - 1]) / denom;
}

Eigen::VectorXd grow_beta(const Eigen::VectorXd& beta, double xi) {
  if (!(xi >= 0.0 && xi <= 1.0)) throw NumericError("grow_beta: xi outside [0,1]");
  Eigen::Index L1 = beta.size();
  Eigen::VectorXd out(L1 + 1);
  out.head(L1 - 1) = beta.head(L1 - 1);
  double tail = beta[L1 - 1];
  out[L1 - 1] = xi * tail;
  out[L1] = (1.0 - xi) * tail;
  return out;
}

double StirlingCache::log_s(int n, int m) {
  if (n < 0 || m < 0 || m > n) return kNegInf;
  ensure(n);
  return rows_[n][m];
}

void StirlingCache::ensure(int n) {
  if (rows_.empty()) rows_.push_back({0.0});  // S(0,0) = 1
  while (static_cast<int>(rows_.size()) <= n) {
    int prev = static_cast<int>(rows_.size()) - 1;
    const std::vector<double>& p = rows_[prev];
    std::vector<double> row(prev + 2, kNegInf);
    double logn = std::log(static_cast<double>(prev));
    // S(prev+1, m) = prev * S(prev, m) + S(prev, m-1)
    for (int m = 1; m <= prev + 1; ++m) {
      double carry = (m <= prev) ? logn + p[m] : kNegInf;
      double up = p[m - 1];
      row[m] = logaddexp(carry, up);
    }
    rows_.push_back(std::move(row));
  }
}

int sample_m(int n_ij, double alpha_beta_j, StirlingCache& cache, Philox& g) {
  if (n_ij < 0) throw NumericError("sample_m: negative count");
  if (n_ij == 0) return 0;
  if (!(alpha_beta_j > 0.0)) return 1;  // degenerate mass parameter: smallest valid m
  cache.ensure(n_ij);
  double lab = std::log(alpha_beta_j);
  // log weights are concave in m; stop once 46 nats below the peak (tail mass
  // is below 1e-17 of the total, beyond double resolution).
  constexpr double kDrop = 46.0;
  double best = kNegInf;
  int m_hi = n_ij;
  // first pass: find the usable range and the max
  for (int m = 1; m <= n_ij; ++m) {
    double lw = cache.log_s(n_ij, m) + m * lab;
    if (lw > best) best = lw;
    if (lw < best - kDrop && m > 1) {
      m_hi = m;
      break;
    }
  }
  double total = 0.0;
  double u = rnd::u01(g);
  // second pass: inverse-CDF over the retained prefix
  double acc = 0.0;
  for (int m = 1; m <= m_hi; ++m) {
    total += std::exp(cache.log_s(n_ij, m) + m * lab - best);
  }
  for (int m = 1; m <= m_hi; ++m) {
    acc += std::exp(cache.log_s(n_ij, m) + m * lab - best);
    if (u * total <= acc) return m;
  }
  return m_hi;
}

Eigen::VectorXd sample_beta_given_m(const Eigen::MatrixXd& m, double lambda, Philox& g) {
  if (!(lambda > 0.0)) throw NumericError("sample_beta_given_m: lambda must be positive");
  Eigen::Index L = m.cols();
  std::vector<double> conc(L + 1);
  for (Eigen::Index j = 0; j < L; ++j) {
    double cj = m.col(j).sum();
    if (cj <= 0.0) {
      cj = 1e-300;
      g_beta_clamps.fetch_add(1, std::memory_order_relaxed);
    }
    conc[j] = cj;
  }
  conc[L] = lambda;
  Eigen::VectorXd beta(L + 1);
  rnd::dirichlet(g, conc, {beta.data(), static_cast<std::size_t>(beta.size())});
  return beta;
}

long beta_clamp_count() { return g_beta_clamps.load(std::memory_order_relaxed); }

double sample_lambda(double lambda_current, int l_states, double m_total, double a, double b,
                     Philox& g, double* phi_out) {
  if (m_total < 1.0) return rnd::gamma_rate(g, a, b);  // nothing observed yet
  double phi = rnd::beta(g, lambda_current + 1.0, m_total);
  if (phi_out) *phi_out = phi;
  double rate = b - std::log(phi);
  double odds = (a + l_states - 1.0) / (m_total * rate);
  double eps = odds / (1.0 + odds);
  double shape = rnd::bernoulli(g, eps) ? a + l_states : a + l_states - 1.0;
  return rnd::gamma_rate(g, shape, rate);
}

double sample_alpha(double alpha_current, const Eigen::VectorXd& n_row_sums, double m_total,
                    double a, double b, Philox& g, Eigen::VectorXd* g_out,
                    Eigen::VectorXd* h_out) {
  Eigen::Index L = n_row_sums.size();
  Eigen::VectorXd gv(L), hv(L);
  double sum_log_g = 0.0, sum_h = 0.0;
  for (Eigen::Index i = 0; i < L; ++i) {
    double ni = n_row_sums[i];
    if (ni <= 0.0) {
      gv[i] = 1.0;
      hv[i] = 0.0;
      continue;
    }
    gv[i] = rnd::beta(g, alpha_current + 1.0, ni);
    hv[i] = rnd::bernoulli(g, ni / (alpha_current + ni));
    sum_log_g += std::log(gv[i]);
    sum_h += hv[i];
  }
  if (g_out) *g_out = gv;
  if (h_out) *h_out = hv;
  double shape = a + m_total - sum_h;
  double rate = b - sum_log_g;
  if (!(shape > 0.0)) shape = a;  // can only trip on degenerate m inputs
  return rnd::gamma_rate(g, shape, rate);
}

}  // namespace ihmm::trans
