#ifndef IHMM_FSF_LOGIT_HPP
#define IHMM_FSF_LOGIT_HPP

// Logistic emission via the 10-component normal-mixture approximation of the
// negative-log-exponential (Gumbel) error, plus the exact logistic predictive
// used for filter weighting.

#include <array>

#include "ihmm/rng.hpp"

namespace ihmm::fsf {

struct MixtureTable {
  // Printed triples, kept verbatim (weights sum to 0.99957 as printed).
  // `sigma` is the published dispersion column; it is a variance, and all
  // density code below goes through `sd` = sqrt(sigma). Reading it as a
  // standard deviation puts the mixture 2.3e-2 away from the Gumbel CDF in
  // sup norm, versus 3.9e-4 as a variance.
  std::array<double, 10> w;
  std::array<double, 10> mu;
  std::array<double, 10> sigma;
  // Derived: renormalized weights and per-component log(w/sd), sd.
  std::array<double, 10> w_norm;
  std::array<double, 10> sd;
  std::array<double, 10> log_w_over_sd;
};

const MixtureTable& table();

// Latent utility U given outcome y and linear predictor gx:
//   U = -log( -log(d)/(1+exp(gx)) - log(e)/exp(gx) * 1{y=0} ),  d,e ~ U(0,1).
// Marginally over y ~ Bernoulli(logistic(gx)), U is Gumbel with location gx.
double utility_from_uniforms(double gx, int y, double d, double e);
double sample_utility(double gx, int y, Philox& g);

// Component indicator z (0-based) with Pr(z=j) prop to (w_j/sd_j)
// exp(-((r - mu_j)/sd_j)^2 / 2), r = U - gx. Computed in log space.
int sample_component(double u_minus_gx, Philox& g);
// Log weights used by the sampler, exposed for the brute-force checks.
std::array<double, 10> component_log_weights(double u_minus_gx);

// Exact one-step predictive, p(y | gx) under the logistic link.
double log_predictive_logistic(double gx, int y);
double predictive_logistic(double gx, int y);

}  // namespace ihmm::fsf

#endif
