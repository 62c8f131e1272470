#ifndef IHMM_ENGINE_HPP
#define IHMM_ENGINE_HPP

// Multi-user streaming driver: routes interleaved events to per-user particle
// clouds and runs the hierarchical step (delta regression, variational
// mixture, prior refresh) every barrier_period global ticks. With the barrier
// disabled each user's outputs are bit-identical to an isolated filter run.

#include <map>
#include <string>
#include <vector>

#include "ihmm/hierarchical_link.hpp"
#include "ihmm/io.hpp"
#include "ihmm/model_types.hpp"
#include "ihmm/particle_filter.hpp"

namespace ihmm::eng {

struct BarrierEvent {
  long index = 0;
  long tick = 0;
  double elbo = 0.0;
  int clusters = 0;  // clusters with expected mass > 1
  int rows = 0;      // (user, state) rows fed to the mixture
};

struct UserState {
  pf::ParticleCloud cloud;
  pf::FilterScratch scratch;
  Eigen::VectorXd D;
  bool has_demo = false;
  double total_log_predictive = 0.0;
  double last_ess = 0.0;
};

class Engine {
 public:
  Engine(const HyperParams& hp, const CovariateLayout& layout);

  // Must be called before the users' first events arrive; a user without a
  // row gets a zero vector and a diagnostic.
  void set_demographics(const std::vector<hier::Demographics>& demo);

  // Events must be per-user contiguous (t = 1, 2, ...) and, when barriers are
  // enabled, globally nondecreasing in t.
  void absorb(const ObservationRecord& rec);
  // Runs the final barrier if the last tick is on the schedule.
  void finish();

  io::CheckpointState snapshot() const;
  static Engine restore(const io::CheckpointState& st);

  std::string report_json() const;

  const std::vector<UserState>& users() const { return users_; }
  const std::vector<BarrierEvent>& barriers() const { return barrier_log_; }
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }
  long current_tick() const { return current_tick_; }
  bool has_mixture() const { return vb_valid_; }
  const vb::VariationalPosterior& mixture() const;  // throws before the first barrier
  bool has_delta() const { return delta_valid_; }
  const hier::DeltaPosterior& delta_posterior() const;

 private:
  void run_barrier(long tick);
  UserState& user_for(const ObservationRecord& rec);
  int d_demo() const { return static_cast<int>(hp_.mu_delta0.cols()); }

  HyperParams hp_;
  CovariateLayout layout_;
  pf::FilterOptions fopts_;
  hier::BarrierSchedule schedule_;
  std::vector<UserState> users_;
  std::map<std::string, int> index_;
  std::map<std::string, Eigen::VectorXd> demo_lookup_;
  long current_tick_ = 0;
  long barrier_count_ = 0;
  bool vb_valid_ = false;
  vb::VariationalPosterior vp_;
  bool delta_valid_ = false;
  hier::DeltaPosterior delta_;
  std::vector<BarrierEvent> barrier_log_;
  std::vector<std::string> diagnostics_;
};

// The mixture prior block of hp in dp_vb's terms.
vb::VbPrior vb_prior_from(const HyperParams& hp);

}  // namespace ihmm::eng

#endif
