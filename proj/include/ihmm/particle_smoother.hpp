#ifndef IHMM_PARTICLE_SMOOTHER_HPP
#define IHMM_PARTICLE_SMOOTHER_HPP

// Backward-simulation smoother over stored filtering clouds. A terminal
// particle is drawn uniformly (the filter leaves equal weights), then each
// earlier slice is reweighted by the integrated transition probability from
// the candidate's state to the already-fixed next state under the candidate's
// own (n, beta, alpha) at that time.

#include <vector>

#include "ihmm/particle_filter.hpp"

namespace ihmm::smooth {

struct SmoothResult {
  // paths[p][t] is a 1-based state label, t = 0..T-1.
  std::vector<std::vector<int>> paths;
  std::vector<int> terminal_particle;
  long degenerate_steps = 0;  // backward steps where every weight was zero
};

SmoothResult smooth(const pf::FilterResult& filtered, const HyperParams& hp, int n_paths);

// Per-time marginal occupancy from sampled paths: out[t][state-1].
std::vector<std::vector<double>> path_marginals(const SmoothResult& sm, int max_state);

}  // namespace ihmm::smooth

#endif
