#ifndef IHMM_IO_HPP
#define IHMM_IO_HPP

// JSONL event and demographics files, ground-truth sidecars, and the
// versioned binary checkpoint (atomic write, FNV-1a64 content hash).

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ihmm/dp_vb.hpp"
#include "ihmm/hierarchical_link.hpp"
#include "ihmm/model_types.hpp"
#include "ihmm/particle_filter.hpp"
#include "ihmm/simulator.hpp"

namespace ihmm::io {

struct IngestOptions {
  bool strict = false;  // strict: malformed, unknown-field, or out-of-order lines are fatal
};

struct IngestReport {
  long lines = 0, accepted = 0, skipped = 0;
  std::vector<std::string> diagnostics;  // line-numbered messages
};

// Reads every event (desk scale, no streaming iterator). If layout.n_tags is
// negative it is inferred from the first parseable line's tag array. The day
// slot is derived from t; the wire carries no day field.
std::vector<ObservationRecord> read_events(std::istream& in, CovariateLayout& layout,
                                           const IngestOptions& opts, IngestReport& rep);
std::vector<ObservationRecord> read_events_file(const std::string& path, CovariateLayout& layout,
                                                const IngestOptions& opts, IngestReport& rep);

void write_events(std::ostream& out, const std::vector<ObservationRecord>& events);
void write_events_file(const std::string& path, const std::vector<ObservationRecord>& events);

std::vector<hier::Demographics> read_demographics(std::istream& in);
std::vector<hier::Demographics> read_demographics_file(const std::string& path);
void write_demographics(std::ostream& out, const std::vector<hier::Demographics>& demo);

// One header line holding delta, then one line per user with segment,
// per-state coefficients, demographics, and the true state path.
void write_truth(std::ostream& out, const sim::Population& pop);

// One barrier-log row (mirrors eng::BarrierEvent to keep io below the engine).
struct BarrierRow {
  long index = 0;
  long tick = 0;
  double elbo = 0.0;
  int clusters = 0;
  int rows = 0;
};

struct CheckpointState {
  HyperParams hp;
  CovariateLayout layout;
  long global_t = 0;
  long barrier_count = 0;
  bool vb_valid = false;
  vb::VariationalPosterior vp;
  bool delta_valid = false;
  hier::DeltaPosterior delta;
  std::vector<pf::ParticleCloud> clouds;
  std::vector<Eigen::VectorXd> demo;  // aligned with clouds; size-0 vector = missing
  std::vector<double> total_lp;       // aligned with clouds
  std::vector<double> last_ess;       // aligned with clouds
  std::vector<BarrierRow> barrier_log;
  std::vector<std::string> diagnostics;
};

// RNG state is implicit: streams are counter-based functions of (seed, user,
// t, particle), so the seed inside hp plus the counters above replay exactly.
void checkpoint_save(const std::string& path, const CheckpointState& st);
CheckpointState checkpoint_load(const std::string& path);  // throws CorruptCheckpoint

}  // namespace ihmm::io

#endif
