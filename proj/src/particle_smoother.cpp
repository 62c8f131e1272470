#include "ihmm/particle_smoother.hpp"

#include <cmath>

#include "ihmm/errors.hpp"
#include "ihmm/kernels.hpp"

namespace ihmm::smooth {

SmoothResult smooth(const pf::FilterResult& filtered, const HyperParams& hp, int n_paths) {
  const auto& snaps = filtered.snapshots;
  if (snaps.empty()) throw ConfigError("smooth: filter was run without snapshots");
  const int T = static_cast<int>(snaps.size());
  const int B = static_cast<int>(snaps.front().size());
  const std::uint64_t user_hash = filtered.cloud.user_hash;

  SmoothResult out;
  out.paths.assign(n_paths, std::vector<int>(T, 1));
  out.terminal_particle.resize(n_paths);

  std::vector<double> w(B);
  for (int pth = 0; pth < n_paths; ++pth) {
    Philox g = substream(hp.seed, {user_hash, kStreamSmooth, static_cast<std::uint64_t>(pth)});
    int b = rnd::uniform_int(g, B);
    out.terminal_particle[pth] = b;
    auto& path = out.paths[pth];
    path[T - 1] = snaps[T - 1][b].s;
    for (int t = T - 2; t >= 0; --t) {
      const int s_next = path[t + 1];
      for (int bb = 0; bb < B; ++bb) {
        const pf::SmoothNode& node = snaps[t][bb];
        // a candidate that has never heard of s_next gets zero weight unless
        // s_next is exactly its next unborn state
        if (s_next > node.L + 1) {
          w[bb] = 0.0;
          continue;
        }
        w[bb] = trans::transition_prob_to(node.n, node.beta, node.alpha, node.s, s_next);
      }
      double total = kernels::sum(w.data(), B);
      int pick;
      if (total > 0.0 && std::isfinite(total)) {
        pick = rnd::categorical(g, {w.data(), static_cast<std::size_t>(B)});
      } else {
        ++out.degenerate_steps;
        pick = rnd::uniform_int(g, B);
      }
      path[t] = snaps[t][pick].s;
    }
  }
  return out;
}

std::vector<std::vector<double>> path_marginals(const SmoothResult& sm, int max_state) {
  if (sm.paths.empty()) return {};
  const int T = static_cast<int>(sm.paths.front().size());
  std::vector<std::vector<double>> out(T, std::vector<double>(max_state, 0.0));
  for (const auto& path : sm.paths)
    for (int t = 0; t < T; ++t) {
      int s = path[t];
      if (s >= 1 && s <= max_state) out[t][s - 1] += 1.0;
    }
  double inv = 1.0 / static_cast<double>(sm.paths.size());
  for (auto& row : out)
    for (double& v : row) v *= inv;
  return out;
}

}  // namespace ihmm::smooth
