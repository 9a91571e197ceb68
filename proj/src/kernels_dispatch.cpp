#include "fedtune/kernels.hpp"

#include "fedtune/errors.hpp"

namespace fedtune::kernels {
namespace {

using detail::Ops;

bool cpu_supports(Backend b) {
  switch (b) {
    case Backend::scalar:
      return true;
    case Backend::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const Ops& ops_for(Backend b) {
  switch (b) {
    case Backend::scalar:
      return detail::scalar_ops();
    case Backend::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return detail::avx2_ops();
#else
      break;
#endif
    case Backend::neon:
#if defined(__aarch64__)
      return detail::neon_ops();
#else
      break;
#endif
  }
  return detail::scalar_ops();
}

Backend detect_best() {
  if (cpu_supports(Backend::avx2)) return Backend::avx2;
  if (cpu_supports(Backend::neon)) return Backend::neon;
  return Backend::scalar;
}

struct State {
  Backend backend;
  const Ops* ops;
};

State& state() {
  static State s = [] {
    const Backend b = detect_best();
    return State{b, &ops_for(b)};
  }();
  return s;
}

}  // namespace

Backend active_backend() { return state().backend; }

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar:
      return "scalar";
    case Backend::avx2:
      return "avx2";
    case Backend::neon:
      return "neon";
  }
  return "unknown";
}

bool backend_supported(Backend b) { return cpu_supports(b); }

std::vector<Backend> supported_backends() {
  std::vector<Backend> out{Backend::scalar};
  if (cpu_supports(Backend::avx2)) out.push_back(Backend::avx2);
  if (cpu_supports(Backend::neon)) out.push_back(Backend::neon);
  return out;
}

void force_backend(Backend b) {
  if (!cpu_supports(b)) {
    throw SpecError(std::string("kernel backend not supported on this host: ") +
                    backend_name(b));
  }
  state() = State{b, &ops_for(b)};
}

void reset_backend() {
  const Backend b = detect_best();
  state() = State{b, &ops_for(b)};
}

void select_backend(const std::string& name) {
  if (name == "auto") {
    reset_backend();
    return;
  }
  for (Backend b : {Backend::scalar, Backend::avx2, Backend::neon}) {
    if (name == backend_name(b)) {
      force_backend(b);
      return;
    }
  }
  throw SpecError("unknown kernel backend: " + name +
                  " (expected auto, scalar, avx2 or neon)");
}

double dot(const double* a, const double* b, std::size_t n) {
  return state().ops->dot(a, b, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  state().ops->axpy(alpha, x, y, n);
}

void scale(double* x, double alpha, std::size_t n) {
  state().ops->scale(x, alpha, n);
}

void adam_step(double* w, double* m, double* v, const double* delta, std::size_t n,
               double beta1, double beta2, double lr, double tau) {
  state().ops->adam_step(w, m, v, delta, n, beta1, beta2, lr, tau);
}

}  // namespace fedtune::kernels
