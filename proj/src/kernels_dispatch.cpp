#include "ihmm/kernels.hpp"

#include <cmath>
#include <limits>

#include "ihmm/errors.hpp"

namespace ihmm::kernels {

namespace {

struct Table {
  double (*dot)(const double*, const double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  double (*max)(const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scale)(double*, std::size_t, double);
  Isa isa;
};

constexpr Table kScalar{ref::dot, ref::sum, ref::max, ref::axpy, ref::scale, Isa::scalar};
constexpr Table kAvx2{avx2::dot, avx2::sum, avx2::max, avx2::axpy, avx2::scale, Isa::avx2};

const Table* pick() { return avx2::available() ? &kAvx2 : &kScalar; }

const Table* g_table = pick();

}  // namespace

Isa active() { return g_table->isa; }

void force(Isa isa) {
  if (isa == Isa::avx2) {
    if (!avx2::available()) throw ConfigError("kernels: avx2 unavailable on this cpu");
    g_table = &kAvx2;
  } else {
    g_table = &kScalar;
  }
}

double dot(const double* a, const double* b, std::size_t n) { return g_table->dot(a, b, n); }
double sum(const double* a, std::size_t n) { return g_table->sum(a, n); }
double max(const double* a, std::size_t n) { return g_table->max(a, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { g_table->axpy(alpha, x, y, n); }
void scale(double* a, std::size_t n, double c) { g_table->scale(a, n, c); }

double logsumexp(const double* a, std::size_t n) {
  if (n == 0) return -std::numeric_limits<double>::infinity();
  double m = max(a, n);
  if (!std::isfinite(m)) return m;  // all -inf (or a stray +inf propagates)
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::exp(a[i] - m);
  return m + std::log(acc);
}

double softmax(double* a, std::size_t n) {
  double lse = logsumexp(a, n);
  if (!std::isfinite(lse)) throw NumericError("softmax: weights sum to zero");
  for (std::size_t i = 0; i < n; ++i) a[i] = std::exp(a[i] - lse);
  return lse;
}

}  // namespace ihmm::kernels
