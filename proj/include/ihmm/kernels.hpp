#ifndef IHMM_KERNELS_HPP
#define IHMM_KERNELS_HPP

// Flat numeric kernels for the particle-loop hot paths. Scalar reference
// implementations live in kernels::ref and are always compiled; the AVX2
// variants are picked once at startup via cpuid. The dispatched entry points
// are the unqualified functions below. Equivalence of the two backends is
// enforced by tests/test_kernels.cpp.

#include <cstddef>

namespace ihmm::kernels {

enum class Isa { scalar, avx2 };

Isa active();
// Test hook; throws if the requested ISA is unavailable on this machine.
void force(Isa isa);

double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
double max(const double* a, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double* a, std::size_t n, double c);

// Built on the primitives above; -inf entries carry zero mass.
double logsumexp(const double* a, std::size_t n);
// In place: log weights -> normalized probabilities. Returns logsumexp.
double softmax(double* a, std::size_t n);

namespace ref {
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
double max(const double* a, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double* a, std::size_t n, double c);
}  // namespace ref

namespace avx2 {
bool available();
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
double max(const double* a, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double* a, std::size_t n, double c);
}  // namespace avx2

}  // namespace ihmm::kernels

#endif
