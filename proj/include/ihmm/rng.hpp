#ifndef IHMM_RNG_HPP
#define IHMM_RNG_HPP

// Counter-based RNG (Philox4x32-10) plus the stateless draw helpers the
// samplers need. Streams are keyed by (seed, entity path), so per-particle /
// per-user work is reproducible no matter how it is scheduled, and a
// checkpoint only has to remember the seed and the stream coordinates.

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>

#include <Eigen/Dense>

namespace ihmm {

// splitmix64 finalizer; used to hash stream coordinates into counter words.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t mix64(std::uint64_t a, std::uint64_t b);
std::uint64_t fnv1a64(std::string_view s);

class Philox {
 public:
  using result_type = std::uint64_t;

  Philox() : Philox(0, 0) {}
  Philox(std::uint64_t key, std::uint64_t stream);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()();

  std::uint64_t key() const { return key_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t block() const { return block_; }

 private:
  void refill();

  std::uint64_t key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::uint64_t out_[2];
  int have_ = 0;
};

// Stream tags: one per subsystem so coordinate tuples can never collide.
enum : std::uint64_t {
  kStreamInit = 1,
  kStreamStep = 2,
  kStreamResample = 3,
  kStreamSmooth = 4,
  kStreamSim = 5,
  kStreamVb = 6,
  kStreamHier = 7,
  kStreamOracle = 8,
};

// Philox keyed by `seed`, stream = hash of the coordinate path.
Philox substream(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

namespace rnd {

// Uniform on the open interval (0,1); never returns an endpoint, safe to log.
double u01(Philox& g);
// One value per call (Box-Muller, cosine branch); no retained state.
double normal01(Philox& g);
double normal(Philox& g, double mean, double sd);
// Shape/rate parameterization. Marsaglia-Tsang; shape < 1 via the boost trick.
double gamma_rate(Philox& g, double shape, double rate);
double beta(Philox& g, double a, double b);
int bernoulli(Philox& g, double p);
// Uniform integer in [0, n).
int uniform_int(Philox& g, int n);
// Index draw from unnormalized nonnegative weights / log weights.
int categorical(Philox& g, std::span<const double> w);
int categorical_log(Philox& g, std::span<const double> logw);
// Writes the normalized draw into `out`; zero concentrations yield zero mass.
void dirichlet(Philox& g, std::span<const double> conc, std::span<double> out);
// mean + L z with L the lower Cholesky factor of the covariance.
Eigen::VectorXd mvn(Philox& g, const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol_lower);

}  // namespace rnd
}  // namespace ihmm

#endif
