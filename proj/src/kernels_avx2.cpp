#include "fedtune/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

// AVX2+FMA variants, 4 doubles per vector with scalar remainder loops.
// This translation unit is compiled with -mavx2 -mfma; the dispatcher only
// routes here after a runtime CPU check.
namespace fedtune::kernels::detail {
namespace {

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  }
  __m128d lo = _mm256_castpd256_pd128(acc);
  const __m128d hi = _mm256_extractf128_pd(acc, 1);
  lo = _mm_add_pd(lo, hi);
  double sum = _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d r = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(y + i, r);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2(double* x, double alpha, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) x[i] *= alpha;
}

void adam_step_avx2(double* w, double* m, double* v, const double* delta, std::size_t n,
                    double beta1, double beta2, double lr, double tau) {
  const __m256d vb1 = _mm256_set1_pd(beta1);
  const __m256d vb1c = _mm256_set1_pd(1.0 - beta1);
  const __m256d vb2 = _mm256_set1_pd(beta2);
  const __m256d vb2c = _mm256_set1_pd(1.0 - beta2);
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d vtau = _mm256_set1_pd(tau);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_loadu_pd(delta + i);
    const __m256d mi = _mm256_fmadd_pd(vb1, _mm256_loadu_pd(m + i), _mm256_mul_pd(vb1c, d));
    _mm256_storeu_pd(m + i, mi);
    const __m256d d2 = _mm256_mul_pd(d, d);
    const __m256d vi = _mm256_fmadd_pd(vb2, _mm256_loadu_pd(v + i), _mm256_mul_pd(vb2c, d2));
    _mm256_storeu_pd(v + i, vi);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vi), vtau);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(vlr, mi), denom);
    _mm256_storeu_pd(w + i, _mm256_add_pd(_mm256_loadu_pd(w + i), step));
  }
  if (i < n) {
    scalar_ops().adam_step(w + i, m + i, v + i, delta + i, n - i, beta1, beta2, lr, tau);
  }
}

}  // namespace

const Ops& avx2_ops() {
  static const Ops ops{dot_avx2, axpy_avx2, scale_avx2, adam_step_avx2};
  return ops;
}

}  // namespace fedtune::kernels::detail

#endif  // x86-64
