#pragma once

#include <cstddef>
#include <string>
#include <vector>

// Dense double-precision kernels used by the training and server-update hot
// loops. A scalar reference implementation always exists; on x86-64 an AVX2+FMA
// variant and on aarch64 a NEON variant are selected at runtime when the CPU
// supports them. Variants agree with the scalar reference to floating-point
// reassociation error only (equivalence-tested; see tests/test_kernels.cpp).
namespace fedtune::kernels {

enum class Backend { scalar, avx2, neon };

namespace detail {
// Function table a backend must fill in.
struct Ops {
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // x[i] *= alpha
  void (*scale)(double* x, double alpha, std::size_t n);
  // One adaptive-moment server update over the whole parameter vector:
  //   m = beta1*m + (1-beta1)*delta
  //   v = beta2*v + (1-beta2)*delta^2
  //   w += lr * m / (sqrt(v) + tau)
  void (*adam_step)(double* w, double* m, double* v, const double* delta, std::size_t n,
                    double beta1, double beta2, double lr, double tau);
};

const Ops& scalar_ops();
#if defined(__x86_64__) || defined(_M_X64)
const Ops& avx2_ops();
#endif
#if defined(__aarch64__)
const Ops& neon_ops();
#endif
}  // namespace detail

// Backend currently routing all kernel calls.
Backend active_backend();
const char* backend_name(Backend b);
// True if this binary carries the variant and the CPU can run it.
bool backend_supported(Backend b);
// All supported backends, scalar first.
std::vector<Backend> supported_backends();
// Pin the backend (tests, --kernels flag). Throws SpecError if unsupported.
void force_backend(Backend b);
// Return to the auto-detected best backend.
void reset_backend();
// Parse "scalar" / "avx2" / "neon" / "auto"; "auto" resets. Throws SpecError.
void select_backend(const std::string& name);

double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double* x, double alpha, std::size_t n);
void adam_step(double* w, double* m, double* v, const double* delta, std::size_t n,
               double beta1, double beta2, double lr, double tau);

}  // namespace fedtune::kernels
