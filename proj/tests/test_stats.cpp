#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fedtune/errors.hpp"
#include "fedtune/rng.hpp"
#include "fedtune/stats.hpp"

using namespace fedtune;

namespace {

// Independent quantile oracle: sort, then interpolate at h = q*(n-1).
double quantile_oracle(std::vector<double> x, double q) {
  std::sort(x.begin(), x.end());
  const double h = q * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

}  // namespace

TEST_CASE("mean and variance on hand-checked values") {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0};
  CHECK(stats::mean(x) == doctest::Approx(2.5));
  // Sample variance with n-1 denominator: (2.25+0.25+0.25+2.25)/3.
  CHECK(stats::variance(x) == doctest::Approx(5.0 / 3.0));
  const std::vector<double> one{7.0};
  CHECK(stats::variance(one) == 0.0);
}

TEST_CASE("quantile interpolates between order statistics") {
  const std::vector<double> x{0.4, 0.1, 0.3, 0.2};
  CHECK(stats::quantile(x, 0.5) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(stats::quantile(x, 0.25) == doctest::Approx(0.175).epsilon(1e-12));
  CHECK(stats::quantile(x, 0.75) == doctest::Approx(0.325).epsilon(1e-12));
  CHECK(stats::quantile(x, 0.0) == doctest::Approx(0.1));
  CHECK(stats::quantile(x, 1.0) == doctest::Approx(0.4));
}

TEST_CASE("quantile matches a sort-based oracle on random groups") {
  rng::Stream s(2024);
  for (int rep = 0; rep < 1000; ++rep) {
    const auto n = static_cast<std::size_t>(s.uniform_int(1, 40));
    std::vector<double> x(n);
    for (double& v : x) v = s.uniform(-10.0, 10.0);
    const double q = s.uniform(0.0, 1.0);
    const double got = stats::quantile(x, q);
    const double want = quantile_oracle(x, q);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("quantile rejects bad input") {
  const std::vector<double> x{1.0};
  CHECK_THROWS_AS(stats::quantile({}, 0.5), SpecError);
  CHECK_THROWS_AS(stats::quantile(x, -0.01), SpecError);
  CHECK_THROWS_AS(stats::quantile(x, 1.01), SpecError);
}

TEST_CASE("summarize bundles count and quartiles") {
  const std::vector<double> x{0.4, 0.1, 0.3, 0.2};
  const auto s = stats::summarize(x);
  CHECK(s.count == 4);
  CHECK(s.median == doctest::Approx(0.25));
  CHECK(s.q1 == doctest::Approx(0.175));
  CHECK(s.q3 == doctest::Approx(0.325));
}

TEST_CASE("argsort is stable for ties") {
  const std::vector<double> x{3.0, 1.0, 2.0, 1.0};
  const auto idx = stats::argsort(x);
  REQUIRE(idx.size() == 4);
  CHECK(idx[0] == 1);  // first 1.0 keeps its original position first
  CHECK(idx[1] == 3);
  CHECK(idx[2] == 2);
  CHECK(idx[3] == 0);
}

TEST_CASE("ranks average over ties") {
  const std::vector<double> x{10.0, 20.0, 20.0, 30.0};
  const auto r = stats::ranks(x);
  CHECK(r[0] == doctest::Approx(1.0));
  CHECK(r[1] == doctest::Approx(2.5));
  CHECK(r[2] == doctest::Approx(2.5));
  CHECK(r[3] == doctest::Approx(4.0));
}

TEST_CASE("spearman correlation hits the extremes") {
  const std::vector<double> a{1.0, 2.0, 3.0, 4.0, 5.0};
  std::vector<double> inc{2.0, 4.0, 6.0, 8.0, 10.0};
  std::vector<double> dec{10.0, 8.0, 6.0, 4.0, 2.0};
  CHECK(stats::spearman_rho(a, inc) == doctest::Approx(1.0));
  CHECK(stats::spearman_rho(a, dec) == doctest::Approx(-1.0));
  const std::vector<double> flat{5.0, 5.0, 5.0, 5.0, 5.0};
  CHECK(stats::spearman_rho(a, flat) == 0.0);
  // Monotone transforms leave rank correlation untouched.
  std::vector<double> cubed = inc;
  for (double& v : cubed) v = v * v * v;
  CHECK(stats::spearman_rho(a, cubed) == doctest::Approx(1.0));
}

TEST_CASE("wilcoxon signed-rank detects a consistent shift") {
  rng::Stream s(7);
  std::vector<double> a(60), b(60);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = s.normal();
    b[i] = a[i] + 0.8 + 0.1 * s.normal();  // b clearly larger
  }
  CHECK(stats::wilcoxon_signed_rank_p(a, b) < 0.001);
  CHECK(stats::wilcoxon_signed_rank_p(b, a) > 0.5);
  // All-zero differences: no evidence, p = 1.
  CHECK(stats::wilcoxon_signed_rank_p(a, a) == doctest::Approx(1.0));
}

TEST_CASE("rank-sum test detects separated samples") {
  rng::Stream s(8);
  std::vector<double> a(50), b(50);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = s.normal();
    b[i] = 1.5 + s.normal();
  }
  CHECK(stats::rank_sum_p(a, b) < 0.001);
  CHECK(stats::rank_sum_p(b, a) > 0.5);
}

TEST_CASE("ks statistic is small for matching draws and large for mismatched") {
  rng::Stream s(9);
  std::vector<double> u(2000);
  for (double& v : u) v = s.uniform(0.0, 1.0);
  const auto uniform_cdf = [](double x) { return std::clamp(x, 0.0, 1.0); };
  CHECK(stats::ks_statistic(u, uniform_cdf) < 0.05);
  // Squaring skews the sample towards 0, far from uniform.
  std::vector<double> skew = u;
  for (double& v : skew) v *= v;
  CHECK(stats::ks_statistic(skew, uniform_cdf) > 0.15);
}

TEST_CASE("chi-square statistic on a hand example") {
  const std::vector<double> obs{12.0, 8.0};
  const std::vector<double> exp{10.0, 10.0};
  CHECK(stats::chi_square_stat(obs, exp) == doctest::Approx(0.8));
  CHECK_THROWS_AS(stats::chi_square_stat(obs, std::vector<double>{10.0, 0.0}), SpecError);
}

TEST_CASE("tv distance and entropy on known distributions") {
  const std::vector<double> p{0.5, 0.5};
  const std::vector<double> q{1.0, 0.0};
  CHECK(stats::tv_distance(p, q) == doctest::Approx(0.5));
  CHECK(stats::tv_distance(p, p) == doctest::Approx(0.0));
  CHECK(stats::entropy(p) == doctest::Approx(std::log(2.0)));
  CHECK(stats::entropy(q) == doctest::Approx(0.0));
  const std::vector<double> u4{0.25, 0.25, 0.25, 0.25};
  CHECK(stats::entropy(u4) == doctest::Approx(std::log(4.0)));
}

TEST_CASE("normal cdf reference points") {
  CHECK(stats::normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(stats::normal_cdf(1.959963985) == doctest::Approx(0.975).epsilon(1e-6));
  CHECK(stats::normal_cdf(-1.959963985) == doctest::Approx(0.025).epsilon(1e-6));
  CHECK(stats::normal_cdf(8.0) == doctest::Approx(1.0));
}
