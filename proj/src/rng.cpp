#include "ihmm/rng.hpp"

#include <cmath>
#include <cstring>
#include <string_view>

#include "ihmm/errors.hpp"

namespace ihmm {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t mix64(std::uint64_t a, std::uint64_t b) { return mix64(a ^ mix64(b)); }

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

namespace {

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace

Philox::Philox(std::uint64_t key, std::uint64_t stream) : key_(key), stream_(stream) {}

void Philox::refill() {
  std::uint32_t x0 = static_cast<std::uint32_t>(block_);
  std::uint32_t x1 = static_cast<std::uint32_t>(block_ >> 32);
  std::uint32_t x2 = static_cast<std::uint32_t>(stream_);
  std::uint32_t x3 = static_cast<std::uint32_t>(stream_ >> 32);
  std::uint32_t k0 = static_cast<std::uint32_t>(key_);
  std::uint32_t k1 = static_cast<std::uint32_t>(key_ >> 32);
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(0xD2511F53u, x0, hi0, lo0);
    mulhilo(0xCD9E8D57u, x2, hi1, lo1);
    x0 = hi1 ^ x1 ^ k0;
    x1 = lo1;
    x2 = hi0 ^ x3 ^ k1;
    x3 = lo0;
    k0 += 0x9E3779B9u;
    k1 += 0xBB67AE85u;
  }
  out_[0] = (static_cast<std::uint64_t>(x1) << 32) | x0;
  out_[1] = (static_cast<std::uint64_t>(x3) << 32) | x2;
  have_ = 2;
  ++block_;
}

Philox::result_type Philox::operator()() {
  if (have_ == 0) refill();
  return out_[--have_];
}

Philox substream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(seed);
  for (std::uint64_t p : path) h = mix64(h, p);
  return Philox(seed, h);
}

namespace rnd {

double u01(Philox& g) {
  return (static_cast<double>(g() >> 11) + 0.5) * 0x1.0p-53;
}

double normal01(Philox& g) {
  double u1 = u01(g);
  double u2 = u01(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

double normal(Philox& g, double mean, double sd) { return mean + sd * normal01(g); }

namespace {

double gamma_shape1plus(Philox& g, double shape) {
  // Marsaglia-Tsang, shape >= 1.
  double d = shape - 1.0 / 3.0;
  double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal01(g);
    double t = 1.0 + c * x;
    if (t <= 0.0) continue;
    double v = t * t * t;
    double u = u01(g);
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

}  // namespace

double gamma_rate(Philox& g, double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0)) throw NumericError("gamma_rate: nonpositive parameter");
  if (shape < 1.0) {
    double u = u01(g);
    // boost: Gamma(a) = Gamma(a+1) * U^{1/a}; underflows to 0 for tiny shapes,
    // which is exactly the clamped-concentration behavior the callers rely on.
    return gamma_shape1plus(g, shape + 1.0) * std::exp(std::log(u) / shape) / rate;
  }
  return gamma_shape1plus(g, shape) / rate;
}

double beta(Philox& g, double a, double b) {
  double x = gamma_rate(g, a, 1.0);
  double y = gamma_rate(g, b, 1.0);
  double s = x + y;
  if (s <= 0.0) return 0.5;  // both shapes tiny; degenerate either way
  return x / s;
}

int bernoulli(Philox& g, double p) { return u01(g) < p ? 1 : 0; }

int uniform_int(Philox& g, int n) {
  if (n <= 0) throw NumericError("uniform_int: n <= 0");
  // double-based draw is unbiased enough for n << 2^53 and keeps one draw per call
  int k = static_cast<int>(u01(g) * n);
  return k >= n ? n - 1 : k;
}

int categorical(Philox& g, std::span<const double> w) {
  double total = 0.0;
  for (double v : w) total += v;
  if (!(total > 0.0) || !std::isfinite(total)) throw NumericError("categorical: bad weight sum");
  double u = u01(g) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    if (u <= acc) return static_cast<int>(i);
  }
  return static_cast<int>(w.size()) - 1;
}

int categorical_log(Philox& g, std::span<const double> logw) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logw)
    if (v > m) m = v;
  if (!std::isfinite(m)) throw NumericError("categorical_log: all weights -inf");
  double total = 0.0;
  for (double v : logw) total += std::exp(v - m);
  double u = u01(g) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < logw.size(); ++i) {
    acc += std::exp(logw[i] - m);
    if (u <= acc) return static_cast<int>(i);
  }
  return static_cast<int>(logw.size()) - 1;
}

void dirichlet(Philox& g, std::span<const double> conc, std::span<double> out) {
  if (conc.size() != out.size()) throw NumericError("dirichlet: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < conc.size(); ++i) {
    out[i] = conc[i] > 0.0 ? gamma_rate(g, conc[i], 1.0) : 0.0;
    total += out[i];
  }
  if (!(total > 0.0)) throw NumericError("dirichlet: all mass underflowed");
  for (double& v : out) v /= total;
}

Eigen::VectorXd mvn(Philox& g, const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol_lower) {
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal01(g);
  return mean + chol_lower * z;
}

}  // namespace rnd
}  // namespace ihmm
