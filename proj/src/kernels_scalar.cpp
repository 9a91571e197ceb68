#include <cmath>

#include "fedtune/kernels.hpp"

// Reference implementations. Deliberately plain loops: these define the
// semantics the SIMD variants are tested against.
namespace fedtune::kernels::detail {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(double* x, double alpha, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void adam_step_scalar(double* w, double* m, double* v, const double* delta, std::size_t n,
                      double beta1, double beta2, double lr, double tau) {
  for (std::size_t i = 0; i < n; ++i) {
    const double d = delta[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * d;
    v[i] = beta2 * v[i] + (1.0 - beta2) * d * d;
    w[i] += lr * m[i] / (std::sqrt(v[i]) + tau);
  }
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops ops{dot_scalar, axpy_scalar, scale_scalar, adam_step_scalar};
  return ops;
}

}  // namespace fedtune::kernels::detail
