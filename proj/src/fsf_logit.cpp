#include "ihmm/fsf_logit.hpp"

#include <cmath>

#include "ihmm/errors.hpp"

namespace ihmm::fsf {

namespace {

MixtureTable build_table() {
  MixtureTable t;
  t.w = {0.00397, 0.0396, 0.168, 0.147, 0.125, 0.101, 0.104, 0.116, 0.107, 0.088};
  t.mu = {5.09, 3.29, 1.82, 1.24, 0.764, 0.391, 0.0431, -0.306, -0.673, -1.06};
  t.sigma = {4.50, 2.02, 1.10, 0.422, 0.198, 0.107, 0.0778, 0.0766, 0.0947, 0.146};
  double wsum = 0.0;
  for (double w : t.w) wsum += w;
  for (int j = 0; j < 10; ++j) {
    t.w_norm[j] = t.w[j] / wsum;
    t.sd[j] = std::sqrt(t.sigma[j]);
    t.log_w_over_sd[j] = std::log(t.w_norm[j]) - std::log(t.sd[j]);
  }
  return t;
}

inline double softplus(double x) {
  // log(1 + exp(x)) without overflow
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

const MixtureTable& table() {
  static const MixtureTable t = build_table();
  return t;
}

double utility_from_uniforms(double gx, int y, double d, double e) {
  // -log(d) * exp(-softplus(gx)) + 1{y=0} * -log(e) * exp(-gx), then -log.
  double a = -std::log(d) * std::exp(-softplus(gx));
  double b = (y == 0) ? -std::log(e) * std::exp(-gx) : 0.0;
  double s = a + b;
  if (!(s > 0.0) || !std::isfinite(s)) throw NumericError("utility_from_uniforms: degenerate draw");
  return -std::log(s);
}

double sample_utility(double gx, int y, Philox& g) {
  double d = rnd::u01(g);
  double e = rnd::u01(g);
  return utility_from_uniforms(gx, y, d, e);
}

std::array<double, 10> component_log_weights(double u_minus_gx) {
  const MixtureTable& t = table();
  std::array<double, 10> lw;
  for (int j = 0; j < 10; ++j) {
    double z = (u_minus_gx - t.mu[j]) / t.sd[j];
    lw[j] = t.log_w_over_sd[j] - 0.5 * z * z;
  }
  return lw;
}

int sample_component(double u_minus_gx, Philox& g) {
  auto lw = component_log_weights(u_minus_gx);
  return rnd::categorical_log(g, lw);
}

double log_predictive_logistic(double gx, int y) {
  return y == 1 ? -softplus(-gx) : -softplus(gx);
}

double predictive_logistic(double gx, int y) { return std::exp(log_predictive_logistic(gx, y)); }

}  // namespace ihmm::fsf
