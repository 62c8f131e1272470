#include "ihmm/hierarchical_link.hpp"

#include <algorithm>
#include <cmath>

#include "ihmm/errors.hpp"

namespace ihmm::hier {

Eigen::MatrixXd DeltaPosterior::sample(Philox& g) const {
  Eigen::MatrixXd out(mean.rows(), mean.cols());
  for (Eigen::Index r = 0; r < mean.rows(); ++r)
    out.row(r) = rnd::mvn(g, mean.row(r).transpose(), cov_chol[r]).transpose();
  return out;
}

DeltaPosterior update_delta(const std::vector<Eigen::VectorXd>& lambda_rows,
                            const std::vector<Eigen::VectorXd>& demo_rows,
                            const std::vector<Eigen::VectorXd>& var_rows,
                            const Eigen::MatrixXd& mu_delta0, double var_delta0) {
  if (lambda_rows.size() != demo_rows.size() || lambda_rows.size() != var_rows.size())
    throw ConfigError("update_delta: row count mismatch");
  const Eigen::Index p = mu_delta0.rows();
  const Eigen::Index dd = mu_delta0.cols();

  DeltaPosterior post;
  post.mean.resize(p, dd);
  post.var.setZero(p, dd);
  post.cov_chol.assign(p, Eigen::MatrixXd::Zero(dd, dd));
  if (dd == 0) return post;

  if (var_delta0 == 0.0) {  // prior point mass
    post.mean = mu_delta0;
    return post;
  }
  if (!(var_delta0 > 0.0)) throw ConfigError("update_delta: negative prior variance");

  for (Eigen::Index r = 0; r < p; ++r) {
    Eigen::MatrixXd prec = Eigen::MatrixXd::Identity(dd, dd) / var_delta0;
    Eigen::VectorXd rhs = mu_delta0.row(r).transpose() / var_delta0;
    for (std::size_t j = 0; j < lambda_rows.size(); ++j) {
      double v = var_rows[j][r];
      if (!(v > 0.0)) throw NumericError("update_delta: nonpositive noise variance");
      prec.selfadjointView<Eigen::Lower>().rankUpdate(demo_rows[j], 1.0 / v);
      rhs += demo_rows[j] * (lambda_rows[j][r] / v);
    }
    prec.triangularView<Eigen::StrictlyUpper>() =
        prec.triangularView<Eigen::StrictlyLower>().transpose();
    Eigen::LLT<Eigen::MatrixXd> llt(prec);
    if (llt.info() != Eigen::Success) throw NumericError("update_delta: precision not SPD");
    Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(dd, dd));
    post.mean.row(r) = (cov * rhs).transpose();
    post.var.row(r) = cov.diagonal().transpose();
    Eigen::LLT<Eigen::MatrixXd> cov_llt(cov);
    if (cov_llt.info() != Eigen::Success) throw NumericError("update_delta: covariance not SPD");
    post.cov_chol[r] = cov_llt.matrixL();
  }
  return post;
}

UserRows average_rows(const pf::ParticleCloud& cloud, const vb::VariationalPosterior* vp,
                      const HyperParams& hp) {
  const int two_d = 2 * hp.d();
  UserRows out;
  for (const Particle& p : cloud.particles) out.lbar = std::max(out.lbar, p.L);
  out.lambda_bar.setZero(out.lbar, two_d);
  out.noise_var.setZero(out.lbar, two_d);
  Eigen::VectorXd hits = Eigen::VectorXd::Zero(out.lbar);

  Eigen::VectorXd base_var = hp.sigma_lambda0.diagonal();
  for (const Particle& p : cloud.particles) {
    for (int l = 1; l <= p.L + 1; ++l) {
      int row = std::min(l, out.lbar) - 1;
      out.lambda_bar.row(row) += p.Lambda[l - 1].transpose();
      if (vp != nullptr) {
        int k = std::clamp(p.c[l - 1], 0, vp->K - 1);
        out.noise_var.row(row) +=
            (vp->B[k].diagonal() / vp->a[k]).transpose();
      } else {
        out.noise_var.row(row) += base_var.transpose();
      }
      hits[row] += 1.0;
    }
  }
  for (int r = 0; r < out.lbar; ++r) {
    out.lambda_bar.row(r) /= hits[r];
    out.noise_var.row(r) /= hits[r];
  }
  return out;
}

Eigen::MatrixXd residual_rows(const pf::ParticleCloud& cloud,
                              const std::vector<Eigen::MatrixXd>& delta_draws,
                              const Eigen::VectorXd& D) {
  if (delta_draws.empty()) throw ConfigError("residual_rows: no delta draws");
  int lbar = 0;
  for (const Particle& p : cloud.particles) lbar = std::max(lbar, p.L);
  const Eigen::Index two_d = cloud.particles.front().Lambda.front().size();

  std::vector<Eigen::VectorXd> shift(cloud.particles.size());
  for (std::size_t b = 0; b < cloud.particles.size(); ++b)
    shift[b] = delta_draws[std::min(b, delta_draws.size() - 1)] * D;

  Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(lbar, two_d);
  Eigen::VectorXd hits = Eigen::VectorXd::Zero(lbar);
  for (std::size_t b = 0; b < cloud.particles.size(); ++b) {
    const Particle& p = cloud.particles[b];
    for (int l = 1; l <= p.L + 1; ++l) {
      int row = std::min(l, lbar) - 1;
      rows.row(row) += (p.Lambda[l - 1] - shift[b]).transpose();
      hits[row] += 1.0;
    }
  }
  for (int r = 0; r < lbar; ++r) rows.row(r) /= hits[r];
  return rows;
}

std::vector<Eigen::MatrixXd> cluster_cov_chols(const vb::VariationalPosterior& vp) {
  std::vector<Eigen::MatrixXd> out(vp.K);
  for (int k = 0; k < vp.K; ++k) {
    Eigen::LLT<Eigen::MatrixXd> llt(vp.B[k] / vp.a[k]);
    if (llt.info() != Eigen::Success)
      throw NumericError("cluster_cov_chols: cluster " + std::to_string(k) + " not SPD");
    out[k] = llt.matrixL();
  }
  return out;
}

void refresh_particle_priors(pf::ParticleCloud& cloud, const vb::VariationalPosterior& vp,
                             const std::vector<Eigen::MatrixXd>& cluster_chol, int row_offset,
                             int lbar, const std::vector<Eigen::MatrixXd>& delta_draws,
                             const Eigen::VectorXd& D, const HyperParams& hp,
                             long barrier_index) {
  if (delta_draws.empty()) throw ConfigError("refresh_particle_priors: no delta draws");
  const int d = hp.d();

  std::vector<std::vector<double>> phi_row(lbar);
  for (int r = 0; r < lbar; ++r) {
    phi_row[r].resize(vp.K);
    for (int k = 0; k < vp.K; ++k) phi_row[r][k] = vp.phi(row_offset + r, k);
  }

  for (std::size_t b = 0; b < cloud.particles.size(); ++b) {
    Particle& p = cloud.particles[b];
    Eigen::VectorXd shift = delta_draws[std::min(b, delta_draws.size() - 1)] * D;
    Philox g = substream(hp.seed, {cloud.user_hash, kStreamHier,
                                   static_cast<std::uint64_t>(barrier_index),
                                   static_cast<std::uint64_t>(b)});
    for (int l = 1; l <= p.L + 1; ++l) {
      const std::vector<double>& pr = phi_row[std::min(l, lbar) - 1];
      int k = rnd::categorical(g, {pr.data(), pr.size()});
      p.c[l - 1] = k;
      p.Lambda[l - 1] = rnd::mvn(g, shift + vp.m[k], cluster_chol[k]);
    }
    const Eigen::VectorXd& lam = p.Lambda[p.L];
    Eigen::VectorXd& gam = p.gamma[p.L];
    for (int j = 0; j < d; ++j) gam[j] = rnd::normal(g, lam[j], std::exp(0.5 * lam[d + j]));
  }
}

}  // namespace ihmm::hier
