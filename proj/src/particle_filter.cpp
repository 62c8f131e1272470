#include "ihmm/particle_filter.hpp"

#include <cassert>
#include <cmath>

#include "ihmm/errors.hpp"
#include "ihmm/kernels.hpp"

namespace ihmm::pf {

namespace {

// step-phase tags inside one (user, t, b) coordinate
enum : std::uint64_t { kPhaseWeights = 0, kPhasePropagate = 1, kPhaseResample = 2 };

Eigen::VectorXd draw_lambda_vec(const HyperParams& hp, const Eigen::VectorXd& shift,
                                const Eigen::MatrixXd& chol, Philox& g) {
  return rnd::mvn(g, hp.mu_lambda0 + shift, chol);
}

Eigen::VectorXd draw_gamma_from_lambda(const Eigen::VectorXd& lambda_vec, Philox& g) {
  Eigen::Index d = lambda_vec.size() / 2;
  Eigen::VectorXd gamma(d);
  for (Eigen::Index j = 0; j < d; ++j)
    gamma[j] = rnd::normal(g, lambda_vec[j], std::exp(0.5 * lambda_vec[d + j]));
  return gamma;
}

// Refresh chain shared by init and step: m -> phi -> lambda -> g,h -> alpha -> beta.
void refresh_structurals(Particle& p, const HyperParams& hp, trans::StirlingCache& cache,
                         Philox& g) {
  const int L = p.L;
  p.aux.m.setZero(L, L);
  double m_total = 0.0;
  for (int l = 0; l < L; ++l) {
    for (int j = 0; j < L; ++j) {
      double n_lj = p.n(l, j);
      if (n_lj < 1.0) continue;
      int m = trans::sample_m(static_cast<int>(n_lj), p.alpha * p.beta[j], cache, g);
      p.aux.m(l, j) = m;
      m_total += m;
    }
  }
  p.lambda = trans::sample_lambda(p.lambda, L, m_total, hp.a_lambda, hp.b_lambda, g, &p.aux.phi);
  p.alpha = trans::sample_alpha(p.alpha, p.n.rowwise().sum(), m_total, hp.a_alpha, hp.b_alpha, g,
                                &p.aux.g, &p.aux.h);
  p.beta = trans::sample_beta_given_m(p.aux.m, p.lambda, g);
}

void draw_emission_aux(Particle& p, const Eigen::VectorXd& x, int y, Philox& g) {
  double gx = kernels::dot(p.gamma[p.s - 1].data(), x.data(), x.size());
  p.aux.du = rnd::u01(g);
  p.aux.eu = rnd::u01(g);
  p.aux.u = fsf::utility_from_uniforms(gx, y, p.aux.du, p.aux.eu);
  p.aux.z = fsf::sample_component(p.aux.u - gx, g);
}

void absorb_and_redraw_gamma(Particle& p, const Eigen::VectorXd& x, Philox& g) {
  conj::SufficientStats& st = p.stats[p.s - 1];
  conj::update_stats(st, x, p.aux.u, p.aux.z);
  conj::GammaPosterior post = conj::posterior_gamma(st, p.Lambda[p.s - 1]);
  p.gamma[p.s - 1] = conj::sample_gamma(post, g);
}

void give_birth(Particle& p, const HyperParams& hp, const Eigen::VectorXd& shift,
                const Eigen::MatrixXd& lambda_chol, Philox& g) {
  double xi = rnd::beta(g, 1.0, p.lambda);
  p.beta = trans::grow_beta(p.beta, xi);
  int L = p.L + 1;
  p.L = L;
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(L, L);
  n.topLeftCorner(L - 1, L - 1) = p.n;
  p.n = std::move(n);
  // the prospective slot becomes real; seed a fresh prospective one
  p.Lambda.push_back(draw_lambda_vec(hp, shift, lambda_chol, g));
  p.c.push_back(rnd::uniform_int(g, hp.k_trunc));
  p.gamma.push_back(draw_gamma_from_lambda(p.Lambda.back(), g));
  p.stats.emplace_back(hp.d());
}

}  // namespace

StepDiag snapshot_diag(const ParticleCloud& cloud) {
  StepDiag d;
  d.t = cloud.t;
  int best_count = 0;
  for (const Particle& p : cloud.particles) {
    int c = ++d.l_hist[p.L];
    if (c > best_count || (c == best_count && p.L < d.modal_l)) {
      best_count = c;
      d.modal_l = p.L;
    }
  }
  return d;
}

void check_cloud(const ParticleCloud& cloud) {
  for (const Particle& p : cloud.particles) {
    assert(p.n.rows() == p.L && p.n.cols() == p.L);
    assert(p.beta.size() == p.L + 1);
    assert(static_cast<int>(p.gamma.size()) == p.L + 1);
    assert(static_cast<int>(p.Lambda.size()) == p.L + 1);
    assert(static_cast<int>(p.c.size()) == p.L + 1);
    assert(static_cast<int>(p.stats.size()) == p.L);
    assert(p.s >= 1 && p.s <= p.L);
    assert(std::abs(p.beta.sum() - 1.0) < 1e-9);
    assert(std::abs(p.n.sum() - static_cast<double>(cloud.t)) < 1e-9);
    (void)p;
  }
}

ParticleCloud init_cloud(const ObservationRecord& first, const HyperParams& hp,
                         FilterScratch& scratch) {
  hp.validate();
  const int d = hp.d();
  if (first.x.size() != d) throw DataError("init_cloud: covariate length != layout dim");

  if (scratch.lambda0_chol.rows() != 2 * d) {
    Eigen::LLT<Eigen::MatrixXd> llt(hp.sigma_lambda0);
    if (llt.info() != Eigen::Success) throw ConfigError("sigma_lambda0 not SPD");
    scratch.lambda0_chol = llt.matrixL();
  }

  ParticleCloud cloud;
  cloud.user_id = first.user_id;
  cloud.user_hash = fnv1a64(first.user_id);
  cloud.delta_shift = Eigen::VectorXd::Zero(2 * d);
  cloud.particles.resize(hp.particles);
  cloud.t = 1;

  for (int b = 0; b < hp.particles; ++b) {
    Philox g = substream(hp.seed, {cloud.user_hash, kStreamInit, static_cast<std::uint64_t>(b)});
    Particle& p = cloud.particles[b];
    p.s = 1;
    p.L = 1;
    p.n = Eigen::MatrixXd::Constant(1, 1, 1.0);
    p.lambda = rnd::gamma_rate(g, hp.a_lambda, hp.b_lambda);
    p.alpha = rnd::gamma_rate(g, hp.a_alpha, hp.b_alpha);
    p.beta = Eigen::VectorXd::Constant(2, 0.5);  // placeholder; refreshed below
    p.aux.m = Eigen::MatrixXd::Constant(1, 1, 1.0);
    // the first transition is booked as a self-entry: n11 = m11 = 1
    p.lambda = trans::sample_lambda(p.lambda, 1, 1.0, hp.a_lambda, hp.b_lambda, g, &p.aux.phi);
    p.alpha = trans::sample_alpha(p.alpha, p.n.rowwise().sum(), 1.0, hp.a_alpha, hp.b_alpha, g,
                                  &p.aux.g, &p.aux.h);
    p.beta = trans::sample_beta_given_m(p.aux.m, p.lambda, g);
    for (int l = 0; l < 2; ++l) {
      p.Lambda.push_back(draw_lambda_vec(hp, cloud.delta_shift, scratch.lambda0_chol, g));
      p.c.push_back(rnd::uniform_int(g, hp.k_trunc));
      p.gamma.push_back(draw_gamma_from_lambda(p.Lambda[l], g));
    }
    p.stats.emplace_back(d);
    draw_emission_aux(p, first.x, first.y, g);
    absorb_and_redraw_gamma(p, first.x, g);
  }
  return cloud;
}

StepDiag step(ParticleCloud& cloud, const ObservationRecord& obs, const HyperParams& hp,
              const FilterOptions& opts, FilterScratch& scratch) {
  const int B = static_cast<int>(cloud.particles.size());
  if (B == 0) throw DataError("step: empty cloud");
  const long t_new = cloud.t + 1;
  const Eigen::VectorXd& x = obs.x;
  const int y = obs.y;
  const auto& tab = fsf::table();

  scratch.logq.resize(B);
  scratch.log_g.resize(B);
  if (opts.fidelity_weights) {
    scratch.cand_u.resize(B);
    scratch.cand_z.resize(B);
  }
  if (scratch.lambda0_chol.rows() != hp.mu_lambda0.size()) {  // fresh scratch after a restore
    Eigen::LLT<Eigen::MatrixXd> llt(hp.sigma_lambda0);
    if (llt.info() != Eigen::Success) throw ConfigError("sigma_lambda0 not SPD");
    scratch.lambda0_chol = llt.matrixL();
  }

  // step-ahead weights per ancestor particle
  for (int b = 0; b < B; ++b) {
    const Particle& p = cloud.particles[b];
    const int cand = p.L + 1;
    auto& logq = scratch.logq[b];
    logq.resize(cand);
    trans::transition_probs(p.n, p.beta, p.alpha, p.s, logq.data());
    if (!opts.fidelity_weights) {
      for (int l = 0; l < cand; ++l) {
        double gx = kernels::dot(p.gamma[l].data(), x.data(), x.size());
        logq[l] = std::log(logq[l]) + fsf::log_predictive_logistic(gx, y);
      }
    } else {
      // conditional-normal weighting: one (d,e) pair per particle, shared
      // across candidates; the propagated state reuses its candidate draw
      Philox gw = substream(hp.seed, {cloud.user_hash, kStreamStep,
                                      static_cast<std::uint64_t>(t_new),
                                      static_cast<std::uint64_t>(b), kPhaseWeights});
      double du = rnd::u01(gw);
      double eu = rnd::u01(gw);
      auto& cu = scratch.cand_u[b];
      auto& cz = scratch.cand_z[b];
      cu.resize(cand);
      cz.resize(cand);
      for (int l = 0; l < cand; ++l) {
        double gx = kernels::dot(p.gamma[l].data(), x.data(), x.size());
        cu[l] = fsf::utility_from_uniforms(gx, y, du, eu);
        cz[l] = fsf::sample_component(cu[l] - gx, gw);
        double r = (cu[l] - gx - tab.mu[cz[l]]) / tab.sd[cz[l]];
        double log_norm = -0.918938533204672742 - std::log(tab.sd[cz[l]]) - 0.5 * r * r;
        logq[l] = std::log(logq[l]) + log_norm;
      }
    }
    scratch.log_g[b] = kernels::logsumexp(logq.data(), logq.size());
  }

  StepDiag diag;
  diag.t = t_new;
  double lse = kernels::logsumexp(scratch.log_g.data(), B);
  if (!std::isfinite(lse)) throw NumericError("step: predictive weights vanished");
  diag.log_predictive = lse - std::log(static_cast<double>(B));
  scratch.probs.resize(B);
  double sum_sq = 0.0;
  for (int b = 0; b < B; ++b) {
    scratch.probs[b] = std::exp(scratch.log_g[b] - lse);
    sum_sq += scratch.probs[b] * scratch.probs[b];
  }
  diag.ess = 1.0 / sum_sq;

  // resample ancestors
  scratch.ancestors.resize(B);
  {
    Philox gr = substream(hp.seed, {cloud.user_hash, kStreamStep,
                                    static_cast<std::uint64_t>(t_new), kPhaseResample});
    if (opts.systematic_resample) {
      double u = rnd::u01(gr) / B;
      double acc = scratch.probs[0];
      int j = 0;
      for (int b = 0; b < B; ++b) {
        double target = u + static_cast<double>(b) / B;
        while (acc < target && j + 1 < B) acc += scratch.probs[++j];
        scratch.ancestors[b] = j;
      }
    } else {
      for (int b = 0; b < B; ++b)
        scratch.ancestors[b] =
            rnd::categorical(gr, {scratch.probs.data(), static_cast<std::size_t>(B)});
    }
  }

  std::vector<Particle> next(B);
  for (int b = 0; b < B; ++b) next[b] = cloud.particles[scratch.ancestors[b]];

  // propagate each slot
  for (int b = 0; b < B; ++b) {
    const int anc = scratch.ancestors[b];
    Particle& p = next[b];
    Philox g = substream(hp.seed, {cloud.user_hash, kStreamStep,
                                   static_cast<std::uint64_t>(t_new),
                                   static_cast<std::uint64_t>(b), kPhasePropagate});
    const auto& logq = scratch.logq[anc];
    int s_new = 1 + rnd::categorical_log(g, {logq.data(), logq.size()});
    int s_old = p.s;
    if (s_new == p.L + 1) give_birth(p, hp, cloud.delta_shift, scratch.lambda0_chol, g);
    p.n(s_old - 1, s_new - 1) += 1.0;
    p.s = s_new;
    refresh_structurals(p, hp, scratch.stirling, g);
    if (!opts.fidelity_weights) {
      draw_emission_aux(p, x, y, g);
    } else {
      p.aux.u = scratch.cand_u[anc][s_new - 1];
      p.aux.z = scratch.cand_z[anc][s_new - 1];
    }
    absorb_and_redraw_gamma(p, x, g);
  }
  cloud.particles = std::move(next);
  cloud.t = t_new;

  StepDiag hist = snapshot_diag(cloud);
  diag.l_hist = std::move(hist.l_hist);
  diag.modal_l = hist.modal_l;
#ifndef NDEBUG
  check_cloud(cloud);
#endif
  return diag;
}

namespace {

void push_snapshot(const ParticleCloud& cloud, std::vector<std::vector<SmoothNode>>& sink) {
  std::vector<SmoothNode> row(cloud.particles.size());
  for (std::size_t b = 0; b < cloud.particles.size(); ++b) {
    const Particle& p = cloud.particles[b];
    row[b] = SmoothNode{p.s, p.L, p.n, p.beta, p.alpha};
  }
  sink.push_back(std::move(row));
}

}  // namespace

FilterResult filter_stream(const std::vector<ObservationRecord>& obs, const HyperParams& hp,
                           const FilterOptions& opts) {
  if (obs.empty()) throw DataError("filter_stream: no observations");
  FilterResult out;
  FilterScratch scratch;
  out.cloud = init_cloud(obs.front(), hp, scratch);
  StepDiag d0 = snapshot_diag(out.cloud);
  d0.t = 1;
  out.diags.push_back(d0);
  if (opts.keep_snapshots) push_snapshot(out.cloud, out.snapshots);
  for (std::size_t i = 1; i < obs.size(); ++i) {
    if (obs[i].user_id != obs.front().user_id)
      throw DataError("filter_stream: mixed users in one stream");
    StepDiag d = step(out.cloud, obs[i], hp, opts, scratch);
    out.total_log_predictive += d.log_predictive;
    out.diags.push_back(std::move(d));
    if (opts.keep_snapshots) push_snapshot(out.cloud, out.snapshots);
  }
  return out;
}

}  // namespace ihmm::pf
