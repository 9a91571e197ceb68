#include "fedtune/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

// NEON variants, 2 doubles per vector with scalar remainder loops. NEON is
// architecturally guaranteed on aarch64, so no runtime feature check is needed.
namespace fedtune::kernels::detail {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    acc = vfmaq_f64(acc, vld1q_f64(a + i), vld1q_f64(b + i));
  }
  double sum = vaddvq_f64(acc);
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_neon(double* x, double alpha, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(x + i, vmulq_f64(va, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) x[i] *= alpha;
}

void adam_step_neon(double* w, double* m, double* v, const double* delta, std::size_t n,
                    double beta1, double beta2, double lr, double tau) {
  const float64x2_t vb1 = vdupq_n_f64(beta1);
  const float64x2_t vb1c = vdupq_n_f64(1.0 - beta1);
  const float64x2_t vb2 = vdupq_n_f64(beta2);
  const float64x2_t vb2c = vdupq_n_f64(1.0 - beta2);
  const float64x2_t vlr = vdupq_n_f64(lr);
  const float64x2_t vtau = vdupq_n_f64(tau);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t d = vld1q_f64(delta + i);
    const float64x2_t mi = vfmaq_f64(vmulq_f64(vb1c, d), vb1, vld1q_f64(m + i));
    vst1q_f64(m + i, mi);
    const float64x2_t d2 = vmulq_f64(d, d);
    const float64x2_t vi = vfmaq_f64(vmulq_f64(vb2c, d2), vb2, vld1q_f64(v + i));
    vst1q_f64(v + i, vi);
    const float64x2_t denom = vaddq_f64(vsqrtq_f64(vi), vtau);
    const float64x2_t step = vdivq_f64(vmulq_f64(vlr, mi), denom);
    vst1q_f64(w + i, vaddq_f64(vld1q_f64(w + i), step));
  }
  if (i < n) {
    scalar_ops().adam_step(w + i, m + i, v + i, delta + i, n - i, beta1, beta2, lr, tau);
  }
}

}  // namespace

const Ops& neon_ops() {
  static const Ops ops{dot_neon, axpy_neon, scale_neon, adam_step_neon};
  return ops;
}

}  // namespace fedtune::kernels::detail

#endif  // aarch64
