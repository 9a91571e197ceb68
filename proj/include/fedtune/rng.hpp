#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace fedtune::rng {

// splitmix64 step (Steele et al.); used as both a mixer and a key-derivation hash.
constexpr std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// FNV-1a of a short string literal, for compile-time domain-separation tags.
constexpr std::uint64_t tag(const char* s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (; *s; ++s) h = (h ^ static_cast<unsigned char>(*s)) * 1099511628211ULL;
  return h;
}

// Derives an independent child seed from a parent seed and a word list.
// Every feeding order yields a distinct stream; streams for distinct word
// lists are statistically independent.
inline std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> words) {
  std::uint64_t state = seed;
  std::uint64_t out = splitmix64(state);
  for (std::uint64_t w : words) {
    state ^= w + 0x9e3779b97f4a7c15ULL + (state << 6) + (state >> 2);
    out = splitmix64(state);
  }
  return out;
}

// Deterministic random stream. Thin wrapper over mt19937_64 with the handful
// of distributions the simulator needs. All draws go through this class so a
// given (seed, call sequence) is reproducible across platforms: distributions
// that libstdc++ does not pin down bit-exactly (normal, gamma) are implemented
// here directly.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer on [lo, hi] inclusive, via rejection (unbiased).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(engine_());  // full range
    const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % span;
    std::uint64_t draw;
    do {
      draw = engine_();
    } while (draw >= limit);
    return lo + static_cast<std::int64_t>(draw % span);
  }

  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(n) - 1));
  }

  // Standard normal via Box-Muller (deterministic given the stream state).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Laplace(0, scale) via inverse CDF; scale 0 returns exactly 0.
  double laplace(double scale) {
    if (scale == 0.0) return 0.0;
    const double u = uniform() - 0.5;
    return -scale * std::copysign(std::log(1.0 - 2.0 * std::abs(u)), u);
  }

  // Gamma(shape, 1) by Marsaglia-Tsang, boosted for shape < 1.
  double gamma(double shape) {
    if (shape < 1.0) {
      const double u = [&] {
        double x = 0.0;
        while (x <= 0.0) x = uniform();
        return x;
      }();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Symmetric Dirichlet(alpha) sample of length k (sums to 1).
  std::vector<double> dirichlet(double alpha, int k) {
    std::vector<double> out(static_cast<std::size_t>(k));
    double total = 0.0;
    for (double& x : out) {
      x = gamma(alpha);
      total += x;
    }
    if (total <= 0.0) {  // all-underflow fallback: concentrate on one coordinate
      out.assign(out.size(), 0.0);
      out[index(out.size())] = 1.0;
      return out;
    }
    for (double& x : out) x /= total;
    return out;
  }

  // Fisher-Yates shuffle using this stream (std::shuffle's draw order is not
  // specified by the standard, so spell it out).
  template <class RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[index(i)]);
    }
  }

  // Sample of `k` distinct indices from [0, n), in random order.
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    // partial Fisher-Yates: first k positions are the sample
    for (int i = 0; i < k; ++i) {
      const auto j = static_cast<std::size_t>(i) +
                     index(static_cast<std::size_t>(n - i));
      std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
    }
    idx.resize(static_cast<std::size_t>(k));
    return idx;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace fedtune::rng
