#include "ihmm/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ihmm/errors.hpp"

namespace ihmm::sim {

namespace {

enum : std::uint64_t { kPhaseStream = 0, kPhaseAssign = 1 };

void check_transition_matrix(const Eigen::MatrixXd& trans) {
  if (trans.rows() != trans.cols() || trans.rows() < 1)
    throw ConfigError("transition matrix must be square and nonempty");
  for (Eigen::Index r = 0; r < trans.rows(); ++r) {
    if ((trans.row(r).array() < -1e-12).any() || std::abs(trans.row(r).sum() - 1.0) > 1e-9)
      throw ConfigError("transition matrix row " + std::to_string(r) + " is not a simplex");
  }
}

}  // namespace

void advance_assets(AssetState& st, int y, long t_of_y, const AssetConfig& cfg, Philox& g) {
  st.bdg_recent = {0.0, 0.0, 0.0};
  std::fill(st.tag_recent.begin(), st.tag_recent.end(), 0.0);

  st.cont_total += y;
  double points = cfg.points_per_answer * y;
  st.crep_total += points;
  st.rep_week += points;
  st.rcv_total += rnd::bernoulli(g, cfg.p_receive);

  for (int j = 0; j < 3; ++j) {
    if (st.cbdg[j] == 0.0 && st.crep_total >= cfg.badge_thresholds[j]) {
      st.cbdg[j] = 1.0;
      st.bdg_recent[j] = 1.0;
      if (!st.ctag.empty()) {
        int k = rnd::uniform_int(g, static_cast<int>(st.ctag.size()));
        st.ctag[k] += 1.0;
        st.tag_recent[k] += 1.0;
      }
    }
  }

  if (t_of_y % 7 == 0) {  // week rollover
    st.rep_last = st.rep_week;
    st.rep_week = 0.0;
    st.rnk_prev = st.rnk_last;
    st.rnk_last = 1.0 / (1.0 + st.rep_last);
  }
}

RawEventFields snapshot_fields(const AssetState& st, long t) {
  RawEventFields f;
  f.intercept = 1.0;
  f.day = static_cast<double>((t - 1) % 7) / 6.0;
  f.cont = st.cont_total;
  f.rcv = st.rcv_total;
  f.crep = st.crep_total;
  f.rep = st.rep_last;
  f.rnk = st.rnk_last;
  f.drnk = st.rnk_last - st.rnk_prev;
  f.bdg = st.bdg_recent;
  f.tag = st.tag_recent;
  f.cbdg = st.cbdg;
  f.ctag = st.ctag;
  return f;
}

RawEventFields gen_covariates(AssetState& st, int y_prev, long t, const AssetConfig& cfg,
                              Philox& g) {
  if (t > 1) advance_assets(st, y_prev, t - 1, cfg, g);
  return snapshot_fields(st, t);
}

HmmStream gen_hmm_stream(const std::vector<Eigen::VectorXd>& gammas, const Eigen::MatrixXd& trans,
                         long T, const AssetConfig& cfg, std::uint64_t seed,
                         const std::string& user_id) {
  check_transition_matrix(trans);
  const int K = static_cast<int>(trans.rows());
  if (static_cast<int>(gammas.size()) != K)
    throw ConfigError("gen_hmm_stream: one coefficient vector per state required");
  for (const Eigen::VectorXd& gm : gammas) {
    if (gm.size() != cfg.layout.dim() || !gm.allFinite())
      throw ConfigError("gen_hmm_stream: bad coefficient vector");
  }

  Philox g = substream(seed, {fnv1a64(user_id), kStreamSim, kPhaseStream});
  AssetState st(cfg.layout.n_tags);
  HmmStream out;
  out.obs.reserve(T);
  out.states.reserve(T);

  std::vector<double> row(K);
  int s = 1 + rnd::uniform_int(g, K);
  int y_prev = 0;
  for (long t = 1; t <= T; ++t) {
    ObservationRecord rec;
    rec.user_id = user_id;
    rec.t = t;
    rec.raw = gen_covariates(st, y_prev, t, cfg, g);
    rec.x = build_covariates(rec.raw, cfg.layout);
    if (t > 1) {
      for (int k = 0; k < K; ++k) row[k] = trans(s - 1, k);
      s = 1 + rnd::categorical(g, {row.data(), row.size()});
    }
    double gx = gammas[s - 1].dot(rec.x);
    rec.y = rnd::bernoulli(g, 1.0 / (1.0 + std::exp(-gx)));
    y_prev = rec.y;
    out.obs.push_back(std::move(rec));
    out.states.push_back(s);
  }
  return out;
}

Population gen_population(const PopulationConfig& cfg, std::uint64_t seed) {
  if (cfg.users < 1 || cfg.T < 1) throw ConfigError("gen_population: empty population");
  if (cfg.segments.empty()) throw ConfigError("gen_population: no segments");
  check_transition_matrix(cfg.trans);
  const int K = static_cast<int>(cfg.trans.rows());
  const int d = cfg.assets.layout.dim();
  double wsum = 0.0;
  for (const SegmentSpec& sg : cfg.segments) {
    if (!(sg.weight >= 0.0) || sg.mu.size() != d || !(sg.sigma >= 0.0))
      throw ConfigError("gen_population: bad segment spec");
    wsum += sg.weight;
  }
  if (!(wsum > 0.0)) throw ConfigError("gen_population: zero total segment weight");
  if (cfg.d_demo > 0 && (cfg.delta.rows() != d || cfg.delta.cols() != cfg.d_demo))
    throw ConfigError("gen_population: delta shape mismatch");

  std::vector<double> w(cfg.segments.size());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = cfg.segments[k].weight / wsum;

  Population pop;
  pop.truth.delta = cfg.d_demo > 0 ? cfg.delta : Eigen::MatrixXd::Zero(d, 0);
  std::vector<HmmStream> streams(cfg.users);
  for (int i = 0; i < cfg.users; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "u%03d", i + 1);
    std::string uid(buf);
    Philox g = substream(seed, {fnv1a64(uid), kStreamSim, kPhaseAssign});

    Eigen::VectorXd D(cfg.d_demo);
    for (int j = 0; j < cfg.d_demo; ++j) D[j] = rnd::bernoulli(g, 0.5);
    int seg = rnd::categorical(g, {w.data(), w.size()});
    Eigen::VectorXd shift = cfg.d_demo > 0 ? (cfg.delta * D).eval() : Eigen::VectorXd::Zero(d);

    std::vector<Eigen::VectorXd> gammas(K);
    for (int k = 0; k < K; ++k) {
      gammas[k].resize(d);
      for (int j = 0; j < d; ++j)
        gammas[k][j] = shift[j] + cfg.segments[seg].mu[j] +
                       cfg.segments[seg].sigma * rnd::normal01(g);
    }

    pop.truth.segment.push_back(seg);
    pop.truth.gamma.push_back(gammas);
    pop.demographics.push_back({uid, D});
    streams[i] = gen_hmm_stream(gammas, cfg.trans, cfg.T, cfg.assets, seed, uid);
    pop.states.push_back(streams[i].states);
  }

  pop.events.reserve(static_cast<std::size_t>(cfg.users) * cfg.T);
  for (long t = 1; t <= cfg.T; ++t)
    for (int i = 0; i < cfg.users; ++i) pop.events.push_back(streams[i].obs[t - 1]);
  return pop;
}

}  // namespace ihmm::sim
