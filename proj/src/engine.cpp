#include "ihmm/engine.hpp"

#include <algorithm>

#include "json.hpp"

#include "ihmm/errors.hpp"
#include "ihmm/ihmm_transition.hpp"

namespace ihmm::eng {

vb::VbPrior vb_prior_from(const HyperParams& hp) {
  vb::VbPrior pr;
  pr.m0 = hp.nw_mean0;
  pr.beta0 = hp.nw_beta0;
  pr.a0 = hp.nw_dof0;
  pr.B0 = hp.nw_scale0;
  pr.a_v0 = hp.a_v0;
  pr.b_v0 = hp.b_v0;
  pr.k_trunc = hp.k_trunc;
  return pr;
}

Engine::Engine(const HyperParams& hp, const CovariateLayout& layout)
    : hp_(hp), layout_(layout) {
  hp_.validate();
  fopts_.fidelity_weights = hp_.fidelity_weights;
  fopts_.systematic_resample = hp_.systematic_resample;
  schedule_.period = hp_.barrier_period;
}

void Engine::set_demographics(const std::vector<hier::Demographics>& demo) {
  for (const hier::Demographics& d : demo) {
    if (d.D.size() != d_demo())
      throw DataError("demographics for " + d.user_id + " have length " +
                      std::to_string(d.D.size()) + ", expected " + std::to_string(d_demo()));
    if (!d.D.allFinite()) throw DataError("non-finite demographics for " + d.user_id);
    demo_lookup_[d.user_id] = d.D;
  }
}

UserState& Engine::user_for(const ObservationRecord& rec) {
  auto it = index_.find(rec.user_id);
  if (it != index_.end()) return users_[it->second];

  if (rec.t != 1)
    throw DataError("first event for user " + rec.user_id + " has t = " +
                    std::to_string(rec.t) + ", expected 1");
  index_[rec.user_id] = static_cast<int>(users_.size());
  users_.emplace_back();
  UserState& u = users_.back();
  auto dit = demo_lookup_.find(rec.user_id);
  if (dit != demo_lookup_.end()) {
    u.D = dit->second;
    u.has_demo = true;
  } else {
    u.D = Eigen::VectorXd::Zero(d_demo());
    if (d_demo() > 0)
      diagnostics_.push_back("user " + rec.user_id + " has no demographics; using zeros");
  }
  u.cloud = pf::init_cloud(rec, hp_, u.scratch);
  return u;
}

void Engine::absorb(const ObservationRecord& rec) {
  if (schedule_.period > 0) {
    if (rec.t < current_tick_)
      throw DataError("events not in global tick order at t = " + std::to_string(rec.t));
    if (rec.t > current_tick_) {
      for (long tk = current_tick_; tk < rec.t; ++tk)
        if (schedule_.due(tk)) run_barrier(tk);
      current_tick_ = rec.t;
    }
  } else {
    current_tick_ = std::max(current_tick_, rec.t);
  }

  auto it = index_.find(rec.user_id);
  if (it == index_.end()) {
    user_for(rec);  // init consumes the first record
    return;
  }
  UserState& u = users_[it->second];
  if (rec.t != u.cloud.t + 1)
    throw DataError("non-contiguous t for user " + rec.user_id + ": got " +
                    std::to_string(rec.t) + " after " + std::to_string(u.cloud.t));
  pf::StepDiag diag = pf::step(u.cloud, rec, hp_, fopts_, u.scratch);
  u.total_log_predictive += diag.log_predictive;
  u.last_ess = diag.ess;
}

void Engine::finish() {
  if (schedule_.period > 0 && schedule_.due(current_tick_)) run_barrier(current_tick_);
}

void Engine::run_barrier(long tick) {
  if (users_.empty()) return;
  ++barrier_count_;
  const int two_d = 2 * hp_.d();

  struct RowSpan {
    int offset = 0;
    int lbar = 0;
  };
  std::vector<RowSpan> span(users_.size());
  std::vector<hier::UserRows> rows(users_.size());
  std::vector<Eigen::VectorXd> lam_rows, demo_rows, var_rows;
  int total = 0;
  for (std::size_t i = 0; i < users_.size(); ++i) {
    rows[i] = hier::average_rows(users_[i].cloud, vb_valid_ ? &vp_ : nullptr, hp_);
    span[i] = {total, rows[i].lbar};
    total += rows[i].lbar;
    for (int r = 0; r < rows[i].lbar; ++r) {
      lam_rows.push_back(rows[i].lambda_bar.row(r).transpose());
      demo_rows.push_back(users_[i].D);
      var_rows.push_back(rows[i].noise_var.row(r).transpose());
    }
  }

  delta_ = hier::update_delta(lam_rows, demo_rows, var_rows, hp_.mu_delta0, hp_.var_delta0);
  delta_valid_ = true;

  std::vector<Eigen::MatrixXd> draws;
  if (d_demo() == 0) {
    draws.assign(1, Eigen::MatrixXd::Zero(two_d, 0));
  } else {
    draws.resize(hp_.particles);
    for (int b = 0; b < hp_.particles; ++b) {
      Philox g = substream(hp_.seed, {kStreamHier, static_cast<std::uint64_t>(barrier_count_),
                                      static_cast<std::uint64_t>(b)});
      draws[b] = delta_.sample(g);
    }
  }

  Eigen::MatrixXd data(total, two_d);
  for (std::size_t i = 0; i < users_.size(); ++i)
    data.middleRows(span[i].offset, span[i].lbar) =
        hier::residual_rows(users_[i].cloud, draws, users_[i].D);

  Philox gv = substream(hp_.seed, {kStreamVb, static_cast<std::uint64_t>(barrier_count_)});
  vp_ = vb::run_vem(data, vb_prior_from(hp_), gv);
  vb_valid_ = true;

  std::vector<Eigen::MatrixXd> chol = hier::cluster_cov_chols(vp_);
  for (std::size_t i = 0; i < users_.size(); ++i) {
    hier::refresh_particle_priors(users_[i].cloud, vp_, chol, span[i].offset, span[i].lbar,
                                  draws, users_[i].D, hp_, barrier_count_);
    if (d_demo() > 0) users_[i].cloud.delta_shift = delta_.mean * users_[i].D;
  }

  BarrierEvent ev;
  ev.index = barrier_count_;
  ev.tick = tick;
  ev.elbo = vp_.elbo_trace.empty() ? 0.0 : vp_.elbo_trace.back();
  Eigen::VectorXd nbar = vp_.counts();
  ev.clusters = static_cast<int>((nbar.array() > 1.0).count());
  ev.rows = total;
  barrier_log_.push_back(ev);
}

const vb::VariationalPosterior& Engine::mixture() const {
  if (!vb_valid_) throw ConfigError("no variational fit yet: no barrier has run");
  return vp_;
}

const hier::DeltaPosterior& Engine::delta_posterior() const {
  if (!delta_valid_) throw ConfigError("no delta posterior yet: no barrier has run");
  return delta_;
}

io::CheckpointState Engine::snapshot() const {
  io::CheckpointState st;
  st.hp = hp_;
  st.layout = layout_;
  st.global_t = current_tick_;
  st.barrier_count = barrier_count_;
  st.vb_valid = vb_valid_;
  if (vb_valid_) st.vp = vp_;
  st.delta_valid = delta_valid_;
  if (delta_valid_) st.delta = delta_;
  for (const UserState& u : users_) {
    st.clouds.push_back(u.cloud);
    st.demo.push_back(u.has_demo ? u.D : Eigen::VectorXd());
    st.total_lp.push_back(u.total_log_predictive);
    st.last_ess.push_back(u.last_ess);
  }
  for (const BarrierEvent& b : barrier_log_)
    st.barrier_log.push_back({b.index, b.tick, b.elbo, b.clusters, b.rows});
  st.diagnostics = diagnostics_;
  return st;
}

Engine Engine::restore(const io::CheckpointState& st) {
  Engine e(st.hp, st.layout);
  e.current_tick_ = st.global_t;
  e.barrier_count_ = st.barrier_count;
  e.vb_valid_ = st.vb_valid;
  if (st.vb_valid) e.vp_ = st.vp;
  e.delta_valid_ = st.delta_valid;
  if (st.delta_valid) e.delta_ = st.delta;
  if (st.demo.size() != st.clouds.size() || st.total_lp.size() != st.clouds.size() ||
      st.last_ess.size() != st.clouds.size())
    throw CorruptCheckpoint("checkpoint per-user array size mismatch");
  for (std::size_t i = 0; i < st.clouds.size(); ++i) {
    e.index_[st.clouds[i].user_id] = static_cast<int>(i);
    e.users_.emplace_back();
    UserState& u = e.users_.back();
    u.cloud = st.clouds[i];
    u.has_demo = st.demo[i].size() > 0;
    u.D = u.has_demo ? st.demo[i] : Eigen::VectorXd::Zero(e.d_demo());
    u.total_log_predictive = st.total_lp[i];
    u.last_ess = st.last_ess[i];
    if (u.has_demo) e.demo_lookup_[st.clouds[i].user_id] = st.demo[i];
  }
  for (const io::BarrierRow& b : st.barrier_log)
    e.barrier_log_.push_back({b.index, b.tick, b.elbo, b.clusters, b.rows});
  e.diagnostics_ = st.diagnostics;
  return e;
}

std::string Engine::report_json() const {
  nlohmann::ordered_json j;
  j["config"] = {{"particles", hp_.particles},
                 {"seed", hp_.seed},
                 {"barrier_period", hp_.barrier_period},
                 {"k_trunc", hp_.k_trunc},
                 {"fidelity_weights", hp_.fidelity_weights},
                 {"n_tags", layout_.n_tags}};
  j["ticks"] = current_tick_;
  nlohmann::ordered_json users = nlohmann::ordered_json::array();
  for (const UserState& u : users_) {
    pf::StepDiag d = pf::snapshot_diag(u.cloud);
    nlohmann::ordered_json hist;
    for (const auto& [l, cnt] : d.l_hist) hist[std::to_string(l)] = cnt;
    users.push_back({{"user_id", u.cloud.user_id},
                     {"t", u.cloud.t},
                     {"total_log_predictive", u.total_log_predictive},
                     {"modal_l", d.modal_l},
                     {"l_hist", hist},
                     {"last_ess", u.last_ess}});
  }
  j["users"] = users;
  nlohmann::ordered_json bars = nlohmann::ordered_json::array();
  for (const BarrierEvent& b : barrier_log_) {
    bars.push_back({{"index", b.index},
                    {"tick", b.tick},
                    {"elbo", b.elbo},
                    {"clusters", b.clusters},
                    {"rows", b.rows}});
  }
  j["barriers"] = bars;
  j["diagnostics"] = diagnostics_;
  j["beta_clamps"] = trans::beta_clamp_count();
  return j.dump(2);
}

}  // namespace ihmm::eng
