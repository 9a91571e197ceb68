#include "fedtune/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedtune/errors.hpp"

namespace fedtune::stats {

double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  const double m = mean(x);
  double acc = 0.0;
  for (double v : x) acc += (v - m) * (v - m);
  return acc / static_cast<double>(n - 1);
}

double quantile(std::span<const double> x, double q) {
  if (x.empty()) throw SpecError("quantile of empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw SpecError("quantile level outside [0, 1]");
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const double h = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= s.size()) return s.back();
  const double frac = h - static_cast<double>(lo);
  return s[lo] + frac * (s[lo + 1] - s[lo]);
}

Summary summarize(std::span<const double> x) {
  Summary out;
  out.count = x.size();
  out.median = quantile(x, 0.5);
  out.q1 = quantile(x, 0.25);
  out.q3 = quantile(x, 0.75);
  return out;
}

std::vector<std::size_t> argsort(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  return idx;
}

std::vector<double> ranks(std::span<const double> x) {
  const auto idx = argsort(x);
  std::vector<double> out(x.size(), 0.0);
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    // positions i..j (0-based) share the average of ranks i+1..j+1
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) out[idx[k]] = r;
    i = j + 1;
  }
  return out;
}

namespace {

double pearson(std::span<const double> a, std::span<const double> b) {
  const double ma = mean(a);
  const double mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

double spearman_rho(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw SpecError("spearman_rho: length mismatch");
  if (a.size() < 2) throw SpecError("spearman_rho: need at least 2 points");
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  return pearson(ra, rb);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double wilcoxon_signed_rank_p(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw SpecError("wilcoxon_signed_rank_p: length mismatch");
  std::vector<double> absd;
  std::vector<int> sign;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d == 0.0) continue;
    absd.push_back(std::abs(d));
    sign.push_back(d < 0.0 ? -1 : 1);
  }
  const std::size_t n = absd.size();
  if (n == 0) return 1.0;
  const auto r = ranks(absd);
  double w_plus = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sign[i] > 0) w_plus += r[i];
  }
  const double nd = static_cast<double>(n);
  const double mu = nd * (nd + 1.0) / 4.0;
  // tie correction: subtract sum(t^3 - t)/48 from the null variance
  double tie_term = 0.0;
  std::vector<double> sorted(absd);
  std::sort(sorted.begin(), sorted.end());
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  const double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term / 48.0;
  if (var <= 0.0) return 1.0;
  // alternative "a < b" means negative differences dominate: small W+
  const double z = (w_plus - mu + 0.5) / std::sqrt(var);
  return normal_cdf(z);
}

double rank_sum_p(std::span<const double> a, std::span<const double> b) {
  const std::size_t n1 = a.size();
  const std::size_t n2 = b.size();
  if (n1 == 0 || n2 == 0) throw SpecError("rank_sum_p: empty sample");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto r = ranks(pooled);
  double r1 = 0.0;
  for (std::size_t i = 0; i < n1; ++i) r1 += r[i];
  const double nd1 = static_cast<double>(n1);
  const double nd2 = static_cast<double>(n2);
  const double n = nd1 + nd2;
  const double mu = nd1 * (n + 1.0) / 2.0;
  double tie_term = 0.0;
  std::vector<double> sorted(pooled);
  std::sort(sorted.begin(), sorted.end());
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  const double var = nd1 * nd2 / 12.0 * (n + 1.0 - tie_term / (n * (n - 1.0)));
  if (var <= 0.0) return 1.0;
  const double z = (r1 - mu + 0.5) / std::sqrt(var);
  return normal_cdf(z);
}

double ks_statistic(std::span<const double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw SpecError("ks_statistic: empty sample");
  std::vector<double> s(sample.begin(), sample.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = cdf(s[i]);
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n;
    d = std::max(d, std::max(std::abs(f - lo), std::abs(hi - f)));
  }
  return d;
}

double chi_square_stat(std::span<const double> observed, std::span<const double> expected) {
  if (observed.size() != expected.size()) throw SpecError("chi_square_stat: length mismatch");
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (expected[i] <= 0.0) throw SpecError("chi_square_stat: nonpositive expected count");
    const double d = observed[i] - expected[i];
    stat += d * d / expected[i];
  }
  return stat;
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw SpecError("tv_distance: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
  return 0.5 * acc;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

}  // namespace fedtune::stats
