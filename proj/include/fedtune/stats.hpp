#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

// Small statistics toolbox shared by the harness (summaries), the tuners
// (quantile split) and the test suites (rank tests, goodness-of-fit checks).
namespace fedtune::stats {

double mean(std::span<const double> x);
// Unbiased sample variance (n-1 denominator); 0 for n < 2.
double variance(std::span<const double> x);

// Quantile with linear interpolation between order statistics: for sorted x
// of size n, position h = q*(n-1), result x[floor(h)] + frac(h)*(x[floor+1]-x[floor]).
// Throws SpecError on empty input or q outside [0, 1].
double quantile(std::span<const double> x, double q);

struct Summary {
  std::size_t count = 0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};
Summary summarize(std::span<const double> x);

// Indices that sort x ascending; ties keep the lower index first (stable).
std::vector<std::size_t> argsort(std::span<const double> x);

// 1-based ranks with ties sharing their average rank.
std::vector<double> ranks(std::span<const double> x);

// Spearman rank correlation (Pearson correlation of rank vectors).
// Returns 0 when either side has zero rank variance.
double spearman_rho(std::span<const double> a, std::span<const double> b);

// One-sided Wilcoxon signed-rank test on paired samples, alternative
// "a tends to be smaller than b". Zero differences are dropped, tied absolute
// differences share average ranks, normal approximation with tie correction
// and continuity correction. Returns the p-value (1.0 if no nonzero pairs).
double wilcoxon_signed_rank_p(std::span<const double> a, std::span<const double> b);

// One-sided Wilcoxon rank-sum (Mann-Whitney) test, alternative "a tends to be
// smaller than b". Normal approximation with tie correction.
double rank_sum_p(std::span<const double> a, std::span<const double> b);

// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
double ks_statistic(std::span<const double> sample, const std::function<double(double)>& cdf);

// Pearson chi-square statistic for observed counts against expected counts
// (expected entries must be positive).
double chi_square_stat(std::span<const double> observed, std::span<const double> expected);

// Total variation distance between two discrete distributions of equal length.
double tv_distance(std::span<const double> p, std::span<const double> q);

// Shannon entropy in nats of a discrete distribution (0*log 0 = 0).
double entropy(std::span<const double> p);

// Standard normal CDF.
double normal_cdf(double z);

}  // namespace fedtune::stats
