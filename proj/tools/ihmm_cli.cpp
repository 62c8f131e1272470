#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ihmm/dp_vb.hpp"
#include "ihmm/engine.hpp"
#include "ihmm/errors.hpp"
#include "ihmm/gibbs_oracle.hpp"
#include "ihmm/io.hpp"
#include "ihmm/model_types.hpp"
#include "ihmm/particle_filter.hpp"
#include "ihmm/particle_smoother.hpp"
#include "ihmm/rng.hpp"
#include "ihmm/simulator.hpp"

namespace {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text << "\n";
    return;
  }
  std::ofstream f(out_path, std::ios::trunc);
  if (!f) throw ihmm::ConfigError("cannot open output file " + out_path);
  f << text << "\n";
}

// Flags shared by the inference subcommands. Command line beats the IHMM_*
// environment variable, which beats the default.
struct ModelFlags {
  int particles = 1000;
  std::uint64_t seed = 1;
  int barrier_period = 25;
  int k_trunc = 30;
  bool strict = false;
  bool fidelity_weights = false;
  std::string checkpoint;
  std::string out;
};

void add_report_out(CLI::App* cmd, ModelFlags& mf) {
  cmd->add_option("--out", mf.out, "write the JSON report here instead of stdout");
}

void add_ingest_flags(CLI::App* cmd, ModelFlags& mf) {
  cmd->add_flag("--strict", mf.strict, "malformed or out-of-order lines are fatal")
      ->envname("IHMM_STRICT");
}

void add_filter_flags(CLI::App* cmd, ModelFlags& mf) {
  cmd->add_option("--particles", mf.particles, "particle count B")
      ->envname("IHMM_PARTICLES")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed", mf.seed, "RNG seed")->envname("IHMM_SEED");
  cmd->add_flag("--fidelity-weights", mf.fidelity_weights,
                "conditional-normal step-ahead weighting instead of exact logistic")
      ->envname("IHMM_FIDELITY_WEIGHTS");
}

std::vector<ihmm::ObservationRecord> load_events(const std::string& path,
                                                 ihmm::CovariateLayout& layout, bool strict,
                                                 ihmm::io::IngestReport& rep) {
  ihmm::io::IngestOptions opts;
  opts.strict = strict;
  if (path.empty() || path == "-") return ihmm::io::read_events(std::cin, layout, opts, rep);
  return ihmm::io::read_events_file(path, layout, opts, rep);
}

ordered_json ingest_json(const ihmm::io::IngestReport& rep) {
  return ordered_json{{"lines", rep.lines},
                      {"accepted", rep.accepted},
                      {"skipped", rep.skipped},
                      {"diagnostics", rep.diagnostics}};
}

int run_simulate(int users, long t_len, int states, int segments, int d_demo, int n_tags,
                 std::uint64_t seed, const std::string& events_path, const std::string& demo_path,
                 const std::string& truth_path) {
  if (states < 1) throw ihmm::ConfigError("--states must be at least 1");
  if (segments < 1) throw ihmm::ConfigError("--segments must be at least 1");
  ihmm::sim::PopulationConfig cfg;
  cfg.users = users;
  cfg.T = t_len;
  cfg.d_demo = d_demo;
  cfg.assets.layout.n_tags = n_tags;
  const int d = cfg.assets.layout.dim();

  if (states == 1) {
    cfg.trans = Eigen::MatrixXd::Ones(1, 1);
  } else {
    cfg.trans = Eigen::MatrixXd::Constant(states, states, 0.15 / (states - 1));
    cfg.trans.diagonal().setConstant(0.85);
  }

  // Segment means and the demographic shift are deterministic in the seed so
  // repeated runs write identical files.
  ihmm::Philox g = ihmm::substream(seed, {ihmm::kStreamSim, 0xC0F1ull});
  cfg.segments.resize(segments);
  for (int s = 0; s < segments; ++s) {
    cfg.segments[s].weight = 1.0;
    cfg.segments[s].mu = Eigen::VectorXd::NullaryExpr(d, [&](Eigen::Index) {
      return 0.6 * ihmm::rnd::normal01(g);
    });
    cfg.segments[s].sigma = 0.2;
  }
  cfg.delta = Eigen::MatrixXd::NullaryExpr(d, d_demo, [&](Eigen::Index, Eigen::Index) {
    return 0.5 * ihmm::rnd::normal01(g);
  });

  ihmm::sim::Population pop = ihmm::sim::gen_population(cfg, seed);

  if (events_path.empty()) {
    ihmm::io::write_events(std::cout, pop.events);
  } else {
    ihmm::io::write_events_file(events_path, pop.events);
  }
  if (!demo_path.empty()) {
    std::ofstream f(demo_path, std::ios::trunc);
    if (!f) throw ihmm::ConfigError("cannot open output file " + demo_path);
    ihmm::io::write_demographics(f, pop.demographics);
  }
  if (!truth_path.empty()) {
    std::ofstream f(truth_path, std::ios::trunc);
    if (!f) throw ihmm::ConfigError("cannot open output file " + truth_path);
    ihmm::io::write_truth(f, pop);
  }
  if (!events_path.empty()) {
    ordered_json j{{"users", users},   {"t", t_len},
                   {"states", states}, {"events", pop.events.size()},
                   {"seed", seed},     {"events_file", events_path}};
    std::cout << j.dump(2) << "\n";
  }
  return 0;
}

int run_filter(const ModelFlags& mf, const std::string& events_path,
               const std::string& demo_path) {
  const bool resume = !mf.checkpoint.empty() && fs::exists(mf.checkpoint);

  std::optional<ihmm::eng::Engine> engine;
  ihmm::CovariateLayout layout;
  layout.n_tags = -1;  // infer from the stream
  if (resume) {
    ihmm::io::CheckpointState st = ihmm::io::checkpoint_load(mf.checkpoint);
    engine.emplace(ihmm::eng::Engine::restore(st));
    layout = st.layout;
  }

  ihmm::io::IngestReport rep;
  std::vector<ihmm::ObservationRecord> events = load_events(events_path, layout, mf.strict, rep);

  if (!resume) {
    if (layout.n_tags < 0) layout.n_tags = 0;
    std::vector<ihmm::hier::Demographics> demo;
    if (!demo_path.empty()) demo = ihmm::io::read_demographics_file(demo_path);
    const int d_demo = demo.empty() ? 0 : static_cast<int>(demo.front().D.size());
    ihmm::HyperParams hp = ihmm::HyperParams::defaults(layout.dim(), d_demo);
    hp.particles = mf.particles;
    hp.seed = mf.seed;
    hp.barrier_period = mf.barrier_period;
    hp.k_trunc = mf.k_trunc;
    hp.fidelity_weights = mf.fidelity_weights;
    engine.emplace(hp, layout);
    if (!demo.empty()) engine->set_demographics(demo);
  }

  for (const ihmm::ObservationRecord& rec : events) engine->absorb(rec);
  engine->finish();

  if (!mf.checkpoint.empty()) ihmm::io::checkpoint_save(mf.checkpoint, engine->snapshot());

  ordered_json j = ordered_json::parse(engine->report_json());
  j["ingest"] = ingest_json(rep);
  emit(j.dump(2), mf.out);
  return 0;
}

int run_smooth(const ModelFlags& mf, const std::string& events_path, int n_paths) {
  ihmm::CovariateLayout layout;
  layout.n_tags = -1;
  ihmm::io::IngestReport rep;
  std::vector<ihmm::ObservationRecord> events = load_events(events_path, layout, mf.strict, rep);
  if (layout.n_tags < 0) layout.n_tags = 0;

  // group per user, keeping first-seen order
  std::vector<std::string> order;
  std::map<std::string, std::vector<ihmm::ObservationRecord>> by_user;
  for (ihmm::ObservationRecord& rec : events) {
    auto [it, fresh] = by_user.try_emplace(rec.user_id);
    if (fresh) order.push_back(rec.user_id);
    it->second.push_back(std::move(rec));
  }

  ihmm::HyperParams hp = ihmm::HyperParams::defaults(layout.dim());
  hp.particles = mf.particles;
  hp.seed = mf.seed;
  hp.k_trunc = mf.k_trunc;
  hp.fidelity_weights = mf.fidelity_weights;
  ihmm::pf::FilterOptions fopts;
  fopts.fidelity_weights = hp.fidelity_weights;
  fopts.keep_snapshots = true;

  ordered_json users = ordered_json::array();
  for (const std::string& uid : order) {
    ihmm::pf::FilterResult fr = ihmm::pf::filter_stream(by_user[uid], hp, fopts);
    ihmm::smooth::SmoothResult sm = ihmm::smooth::smooth(fr, hp, n_paths);
    int max_state = 1;
    for (const std::vector<int>& p : sm.paths)
      for (int s : p) max_state = std::max(max_state, s);
    std::vector<std::vector<double>> marg = ihmm::smooth::path_marginals(sm, max_state);
    users.push_back({{"user_id", uid},
                     {"t", by_user[uid].size()},
                     {"total_log_predictive", fr.total_log_predictive},
                     {"paths", n_paths},
                     {"degenerate_steps", sm.degenerate_steps},
                     {"smoothed_marginals", marg}});
  }
  ordered_json j{{"config",
                  {{"particles", hp.particles},
                   {"seed", hp.seed},
                   {"n_paths", n_paths},
                   {"fidelity_weights", hp.fidelity_weights}}},
                 {"users", users},
                 {"ingest", ingest_json(rep)}};
  emit(j.dump(2), mf.out);
  return 0;
}

int run_vb(const ModelFlags& mf, const std::string& data_path, int max_iter, double tol) {
  std::vector<Eigen::VectorXd> rows;
  auto consume = [&](std::istream& in) {
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("x") || !j["x"].is_array())
        throw ihmm::DataError("line " + std::to_string(lineno) +
                              ": expected an object with an \"x\" array");
      Eigen::VectorXd v(j["x"].size());
      for (std::size_t i = 0; i < j["x"].size(); ++i) {
        if (!j["x"][i].is_number())
          throw ihmm::DataError("line " + std::to_string(lineno) + ": x entries must be numbers");
        v[static_cast<Eigen::Index>(i)] = j["x"][i].get<double>();
      }
      if (!rows.empty() && v.size() != rows.front().size())
        throw ihmm::DataError("line " + std::to_string(lineno) + ": row length changed");
      rows.push_back(std::move(v));
    }
  };
  if (data_path.empty() || data_path == "-") {
    consume(std::cin);
  } else {
    std::ifstream f(data_path);
    if (!f) throw ihmm::ConfigError("cannot open data file " + data_path);
    consume(f);
  }
  if (rows.empty()) throw ihmm::DataError("vb: no data rows");

  const int p = static_cast<int>(rows.front().size());
  Eigen::MatrixXd data(static_cast<Eigen::Index>(rows.size()), p);
  for (std::size_t i = 0; i < rows.size(); ++i) data.row(static_cast<Eigen::Index>(i)) = rows[i];

  ihmm::vb::VbPrior prior = ihmm::vb::VbPrior::defaults(p);
  prior.k_trunc = mf.k_trunc;
  ihmm::Philox g = ihmm::substream(mf.seed, {ihmm::kStreamVb});
  ihmm::vb::VariationalPosterior vp = ihmm::vb::run_vem(data, prior, g, max_iter, tol);

  Eigen::VectorXd nbar = vp.counts();
  ordered_json clusters = ordered_json::array();
  for (int k = 0; k < vp.K; ++k) {
    clusters.push_back({{"count", nbar[k]},
                        {"mean", std::vector<double>(vp.m[k].data(), vp.m[k].data() + p)}});
  }
  ordered_json j{{"rows", rows.size()},
                 {"dim", p},
                 {"k_trunc", prior.k_trunc},
                 {"k", vp.K},
                 {"iterations", vp.elbo_trace.size()},
                 {"elbo", vp.elbo_trace.back()},
                 {"elbo_trace", vp.elbo_trace},
                 {"occupied", static_cast<int>((nbar.array() > 1.0).count())},
                 {"concentration_mean", vp.a_v / vp.b_v},
                 {"clusters", clusters}};
  emit(j.dump(2), mf.out);
  return 0;
}

int run_gibbs_check(std::uint64_t seed, int sweeps, int burn_in, const std::string& out) {
  ihmm::oracle::TinyInstance inst = ihmm::oracle::bundled_instance();
  ihmm::oracle::PathDist exact = ihmm::oracle::exact_posterior(inst);
  ihmm::oracle::PathDist gibbs = ihmm::oracle::collapsed_gibbs(inst, sweeps, burn_in, seed);
  const double tv = ihmm::oracle::tv_distance(exact, gibbs);
  const double mtv = ihmm::oracle::max_marginal_tv(ihmm::oracle::marginals(exact, inst.K),
                                                   ihmm::oracle::marginals(gibbs, inst.K));
  const bool pass = tv <= 0.05;
  ordered_json sites = ordered_json::array();
  std::vector<std::vector<double>> em = ihmm::oracle::marginals(exact, inst.K);
  std::vector<std::vector<double>> gm = ihmm::oracle::marginals(gibbs, inst.K);
  for (std::size_t t = 0; t < em.size(); ++t)
    sites.push_back({{"t", t + 1}, {"exact", em[t]}, {"gibbs", gm[t]}});
  ordered_json j{{"sweeps", sweeps}, {"burn_in", burn_in}, {"seed", seed},
                 {"tv", tv},         {"marginal_tv", mtv}, {"pass", pass},
                 {"marginals", sites}};
  emit(j.dump(2), out);
  return pass ? 0 : 1;
}

int run_report(const std::string& checkpoint, const std::string& out) {
  ihmm::io::CheckpointState st = ihmm::io::checkpoint_load(checkpoint);
  ihmm::eng::Engine engine = ihmm::eng::Engine::restore(st);
  emit(engine.report_json(), out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming infinite-HMM inference engine"};
  app.require_subcommand(1);

  ModelFlags mf;
  int rc = 0;

  // simulate
  int sim_users = 5, sim_states = 2, sim_segments = 2, sim_d_demo = 0, sim_n_tags = 3;
  long sim_t = 100;
  std::string sim_events, sim_demo, sim_truth;
  CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic event stream");
  sim->add_option("--users", sim_users, "user count")->check(CLI::PositiveNumber);
  sim->add_option("--t", sim_t, "ticks per user")->check(CLI::PositiveNumber);
  sim->add_option("--states", sim_states, "true state count");
  sim->add_option("--segments", sim_segments, "coefficient segment count");
  sim->add_option("--d-demo", sim_d_demo, "demographic vector length")
      ->check(CLI::NonNegativeNumber);
  sim->add_option("--n-tags", sim_n_tags, "tag vocabulary size")->check(CLI::NonNegativeNumber);
  sim->add_option("--seed", mf.seed, "RNG seed")->envname("IHMM_SEED");
  sim->add_option("--events", sim_events, "events JSONL path (default stdout)");
  sim->add_option("--demographics", sim_demo, "demographics JSONL path");
  sim->add_option("--truth", sim_truth, "ground-truth sidecar path");
  sim->callback([&]() {
    rc = run_simulate(sim_users, sim_t, sim_states, sim_segments, sim_d_demo, sim_n_tags, mf.seed,
                      sim_events, sim_demo, sim_truth);
  });

  // filter
  std::string flt_events = "-", flt_demo;
  CLI::App* flt = app.add_subcommand("filter", "run the streaming filter over an event file");
  flt->add_option("--events", flt_events, "events JSONL path, or - for stdin");
  flt->add_option("--demographics", flt_demo, "demographics JSONL path");
  add_filter_flags(flt, mf);
  flt->add_option("--barrier-period", mf.barrier_period,
                  "hierarchical barrier period in ticks (0 disables)")
      ->envname("IHMM_BARRIER_PERIOD")
      ->check(CLI::NonNegativeNumber);
  flt->add_option("--k-trunc", mf.k_trunc, "mixture truncation level")
      ->envname("IHMM_K_TRUNC")
      ->check(CLI::PositiveNumber);
  flt->add_option("--checkpoint", mf.checkpoint,
                  "checkpoint file: resumed when present, written on exit")
      ->envname("IHMM_CHECKPOINT");
  add_ingest_flags(flt, mf);
  add_report_out(flt, mf);
  flt->callback([&]() { rc = run_filter(mf, flt_events, flt_demo); });

  // smooth
  std::string sm_events = "-";
  int sm_paths = 300;
  CLI::App* smc = app.add_subcommand("smooth", "filter then backward-simulate state paths");
  smc->add_option("--events", sm_events, "events JSONL path, or - for stdin");
  smc->add_option("--n-paths", sm_paths, "backward paths per user")->check(CLI::PositiveNumber);
  add_filter_flags(smc, mf);
  smc->add_option("--k-trunc", mf.k_trunc, "mixture truncation level")->envname("IHMM_K_TRUNC");
  add_ingest_flags(smc, mf);
  add_report_out(smc, mf);
  smc->callback([&]() { rc = run_smooth(mf, sm_events, sm_paths); });

  // vb
  std::string vb_data = "-";
  int vb_max_iter = 200;
  double vb_tol = 1e-7;
  CLI::App* vbc = app.add_subcommand("vb", "fit the variational mixture to JSONL rows");
  vbc->add_option("--data", vb_data, "JSONL rows with an \"x\" array, or - for stdin");
  vbc->add_option("--k-trunc", mf.k_trunc, "truncation level")->envname("IHMM_K_TRUNC");
  vbc->add_option("--seed", mf.seed, "RNG seed")->envname("IHMM_SEED");
  vbc->add_option("--max-iter", vb_max_iter, "sweep cap")->check(CLI::PositiveNumber);
  vbc->add_option("--tol", vb_tol, "ELBO convergence tolerance");
  add_report_out(vbc, mf);
  vbc->callback([&]() { rc = run_vb(mf, vb_data, vb_max_iter, vb_tol); });

  // gibbs-check
  int gc_sweeps = 20000, gc_burn = 2000;
  CLI::App* gc = app.add_subcommand(
      "gibbs-check", "collapsed Gibbs vs exact enumeration on the bundled instance");
  gc->add_option("--sweeps", gc_sweeps, "post-anything sweep count")->check(CLI::PositiveNumber);
  gc->add_option("--burn-in", gc_burn, "discarded sweeps")->check(CLI::NonNegativeNumber);
  gc->add_option("--seed", mf.seed, "RNG seed")->envname("IHMM_SEED");
  add_report_out(gc, mf);
  gc->callback([&]() { rc = run_gibbs_check(mf.seed, gc_sweeps, gc_burn, mf.out); });

  // report
  std::string rp_checkpoint;
  CLI::App* rp = app.add_subcommand("report", "print the report stored in a checkpoint");
  rp->add_option("--checkpoint", rp_checkpoint, "checkpoint file")
      ->envname("IHMM_CHECKPOINT")
      ->required();
  add_report_out(rp, mf);
  rp->callback([&]() { rc = run_report(rp_checkpoint, mf.out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ihmm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ihmm::DataError& e) {  // includes CorruptCheckpoint
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const ihmm::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
