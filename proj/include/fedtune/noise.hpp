#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "fedtune/rng.hpp"
#include "fedtune/workload.hpp"

// Evaluation-noise layer: everything that corrupts the exact validation
// objective before a tuner sees it. Four sources compose: (1) scoring only a
// client subsample, (2) sampling clients with availability bias, (3) data
// heterogeneity controlled by partially re-partitioning validation shards iid,
// (4) differentially private release of scores. Privacy spending is tracked by
// a ledger under basic composition.
namespace fedtune::noise {

enum class PrivacyMode {
  off,
  per_eval,      // Laplace noise on every released score
  oneshot_topk,  // scores stay private; only top-k selections are released
};

struct PrivacySpec {
  double epsilon = std::numeric_limits<double>::infinity();
  PrivacyMode mode = PrivacyMode::off;

  bool enabled() const { return mode != PrivacyMode::off; }
};

// One evaluation-noise condition (a grid point of the experiment sweeps).
struct EvalPolicy {
  // Validation clients scored per evaluation; nullopt (or n_val) scores all.
  std::optional<int> subsample;
  // Availability-bias exponent: clients are drawn with probability
  // proportional to (accuracy + bias_delta)^bias_b. 0 = unbiased.
  double bias_b = 0.0;
  double bias_delta = 1e-4;
  // Fraction of every validation shard replaced by draws from the pooled
  // validation data (0 = untouched shards, 1 = fully iid shards).
  double iid_p = 0.0;
  PrivacySpec privacy;

  void validate(int n_val) const;  // throws SpecError
  int effective_subsample(int n_val) const;
  // True if evaluation under this policy returns the exact objective.
  bool noiseless(int n_val) const;
};

// Splits a total epsilon across a preplanned number of queries (basic
// composition) and refuses to answer more.
class PrivacyLedger {
 public:
  PrivacyLedger(double epsilon, int planned_queries);

  double epsilon_total() const { return epsilon_; }
  double epsilon_per_query() const;
  int planned() const { return planned_; }
  int consumed() const { return consumed_; }
  double epsilon_consumed() const;
  // Account one query. Throws PrivacyBudgetExhausted past the plan.
  void consume();

 private:
  double epsilon_;
  int planned_;
  int consumed_ = 0;
};

// `s` distinct client indices from [0, n_val), uniformly.
std::vector<int> subsample_uniform(int n_val, int s, rng::Stream& stream);

// `s` distinct client indices drawn successively without replacement with
// probability proportional to (accuracy[k] + delta)^b. b = 0 reduces to
// uniform; larger b concentrates on high-accuracy (easy) clients.
std::vector<int> biased_sample(std::span<const double> accuracies, double b, double delta,
                               int s, rng::Stream& stream);

// Replace a `p`-fraction of every shard's samples (selected without
// replacement) by draws from the pooled samples of all shards. Shard sizes are
// preserved; untouched samples keep their positions, so p = 0 is an exact
// identity. p = 1 makes every shard an iid sample of the pool.
std::vector<fed::ClientDataset> repartition_iid(const std::vector<fed::ClientDataset>& shards,
                                                double p, rng::Stream& stream);

// Population with repartition applied to the validation split (training shards
// and weights are untouched; shard sizes, and hence weights, are preserved).
fed::ClientPopulation repartition_population(const fed::ClientPopulation& population, double p,
                                             std::uint64_t seed);

// Laplace mechanism: value + Laplace(sensitivity / ledger.epsilon_per_query()).
// The released value is NOT clamped to [0, 1]. Consumes one ledger query.
double private_release(double value, double sensitivity, rng::Stream& stream,
                       PrivacyLedger& ledger);

// One-shot Laplace top-k: perturb each score with Laplace noise of scale
// 2*k / (ledger.epsilon_per_query() * s) — equivalently 2*T*k/(epsilon*s) for a
// plan of T selection events — and return the indices of the k smallest noisy
// scores (scores are errors; smaller is better). Ties resolve to the earliest
// index; with infinite epsilon the selection is exact. Consumes one query.
std::vector<int> oneshot_topk(std::span<const double> scores, int k, int s, rng::Stream& stream,
                              PrivacyLedger& ledger);

// One noisy evaluation under `policy` (repartition excluded: it is applied
// once per population, not per evaluation): subsample or biased-sample the
// validation clients, aggregate their errors (uniformly when privacy is
// active, since the Laplace sensitivity argument needs uniform weights), and
// under per_eval privacy release through `ledger` (required then).
double noisy_evaluate(fed::Workload& workload, const hp::HpConfig& config, std::uint64_t uid,
                      int rounds, const EvalPolicy& policy, rng::Stream& stream,
                      PrivacyLedger* ledger = nullptr);

// What tuners see of the objective. select_topk is the selection mechanism
// rung-based tuners must use, so that private selection is routed through the
// one-shot mechanism.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  // Noisy objective of config `uid` at `rounds` fidelity.
  virtual double evaluate(const hp::HpConfig& config, std::uint64_t uid, int rounds) = 0;
  // Exact objective (reporting/ground truth; never privatized, never charged).
  virtual double full_error(const hp::HpConfig& config, std::uint64_t uid, int rounds) = 0;
  // Indices of the k best (smallest) scores.
  virtual std::vector<int> select_topk(std::span<const double> scores, int k) = 0;
  virtual int trained_rounds(std::uint64_t uid) const = 0;
  virtual double epsilon_consumed() const = 0;
};

// Production evaluator: applies `policy` to a workload with a dedicated noise
// stream. `planned_queries` preplans the privacy ledger: the number of
// evaluations (per_eval mode) or selection events (oneshot mode); ignored when
// privacy is off.
class NoisyEvaluator : public Evaluator {
 public:
  NoisyEvaluator(fed::Workload& workload, EvalPolicy policy, std::uint64_t noise_seed,
                 int planned_queries = 0);

  double evaluate(const hp::HpConfig& config, std::uint64_t uid, int rounds) override;
  double full_error(const hp::HpConfig& config, std::uint64_t uid, int rounds) override;
  std::vector<int> select_topk(std::span<const double> scores, int k) override;
  int trained_rounds(std::uint64_t uid) const override;
  double epsilon_consumed() const override;

  const EvalPolicy& policy() const { return policy_; }
  const PrivacyLedger* ledger() const { return ledger_ ? &*ledger_ : nullptr; }

 private:
  fed::Workload& workload_;
  EvalPolicy policy_;
  rng::Stream stream_;
  std::optional<PrivacyLedger> ledger_;
};

}  // namespace fedtune::noise
