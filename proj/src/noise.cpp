#include "fedtune/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedtune/errors.hpp"
#include "fedtune/stats.hpp"

namespace fedtune::noise {

void EvalPolicy::validate(int n_val) const {
  if (n_val < 1) throw SpecError("eval policy: workload has no validation clients");
  if (subsample && (*subsample < 1 || *subsample > n_val)) {
    throw SpecError("eval policy: subsample size must lie in [1, n_val]");
  }
  if (!(bias_b >= 0.0)) throw SpecError("eval policy: bias exponent must be nonnegative");
  if (!(bias_delta > 0.0)) throw SpecError("eval policy: bias delta must be positive");
  if (!(iid_p >= 0.0 && iid_p <= 1.0)) throw SpecError("eval policy: iid fraction must lie in [0, 1]");
  if (privacy.enabled() && !(privacy.epsilon > 0.0)) {
    throw SpecError("eval policy: privacy epsilon must be positive");
  }
}

int EvalPolicy::effective_subsample(int n_val) const {
  return subsample ? *subsample : n_val;
}

bool EvalPolicy::noiseless(int n_val) const {
  return effective_subsample(n_val) == n_val && bias_b == 0.0 && iid_p == 0.0 &&
         !privacy.enabled();
}

PrivacyLedger::PrivacyLedger(double epsilon, int planned_queries)
    : epsilon_(epsilon), planned_(planned_queries) {
  if (!(epsilon > 0.0)) throw SpecError("privacy ledger: epsilon must be positive");
  if (planned_ < 1) throw SpecError("privacy ledger: need at least one planned query");
}

double PrivacyLedger::epsilon_per_query() const {
  return epsilon_ / static_cast<double>(planned_);
}

double PrivacyLedger::epsilon_consumed() const {
  // Guard the zero-query case: with an infinite budget the per-query rate is
  // infinite, and inf * 0 would poison the total with NaN.
  if (consumed_ == 0) return 0.0;
  return epsilon_per_query() * static_cast<double>(consumed_);
}

void PrivacyLedger::consume() {
  if (consumed_ >= planned_) {
    throw PrivacyBudgetExhausted("privacy ledger: more queries than the epsilon split planned");
  }
  ++consumed_;
}

std::vector<int> subsample_uniform(int n_val, int s, rng::Stream& stream) {
  if (s < 1 || s > n_val) throw SpecError("subsample_uniform: size out of range");
  return stream.sample_without_replacement(n_val, s);
}

std::vector<int> biased_sample(std::span<const double> accuracies, double b, double delta,
                               int s, rng::Stream& stream) {
  const int n = static_cast<int>(accuracies.size());
  if (s < 1 || s > n) throw SpecError("biased_sample: size out of range");
  if (!(delta > 0.0)) throw SpecError("biased_sample: delta must be positive");
  if (!(b >= 0.0)) throw SpecError("biased_sample: exponent must be nonnegative");
  std::vector<double> weight(accuracies.size());
  for (std::size_t k = 0; k < accuracies.size(); ++k) {
    weight[k] = std::pow(accuracies[k] + delta, b);
  }
  std::vector<int> chosen;
  chosen.reserve(static_cast<std::size_t>(s));
  std::vector<bool> taken(accuracies.size(), false);
  for (int draw = 0; draw < s; ++draw) {
    double total = 0.0;
    for (std::size_t k = 0; k < weight.size(); ++k) {
      if (!taken[k]) total += weight[k];
    }
    const double u = stream.uniform() * total;
    double cum = 0.0;
    int pick = -1;
    for (std::size_t k = 0; k < weight.size(); ++k) {
      if (taken[k]) continue;
      cum += weight[k];
      pick = static_cast<int>(k);  // last untaken wins if u lands past cum (rounding)
      if (u < cum) break;
    }
    taken[static_cast<std::size_t>(pick)] = true;
    chosen.push_back(pick);
  }
  return chosen;
}

std::vector<fed::ClientDataset> repartition_iid(const std::vector<fed::ClientDataset>& shards,
                                                double p, rng::Stream& stream) {
  if (!(p >= 0.0 && p <= 1.0)) throw SpecError("repartition_iid: fraction must lie in [0, 1]");
  if (shards.empty()) throw SpecError("repartition_iid: no shards");
  const int dim = shards.front().dim;
  for (const auto& s : shards) {
    if (s.dim != dim) throw SpecError("repartition_iid: mixed feature dimensions");
  }
  std::vector<fed::ClientDataset> out(shards);
  if (p == 0.0) return out;
  // pooled sample index: (shard, row) pairs
  std::vector<std::pair<int, int>> pool;
  for (std::size_t k = 0; k < shards.size(); ++k) {
    for (int i = 0; i < shards[k].n(); ++i) pool.emplace_back(static_cast<int>(k), i);
  }
  for (auto& shard : out) {
    const int n = shard.n();
    const int replace = static_cast<int>(std::lround(p * n));
    if (replace == 0) continue;
    const auto rows = stream.sample_without_replacement(n, replace);
    for (int row : rows) {
      const auto [src_shard, src_row] = pool[stream.index(pool.size())];
      const auto src = shards[static_cast<std::size_t>(src_shard)].row(src_row);
      std::copy(src.begin(), src.end(),
                shard.features.begin() + static_cast<std::size_t>(row) * static_cast<std::size_t>(dim));
      shard.labels[static_cast<std::size_t>(row)] =
          shards[static_cast<std::size_t>(src_shard)].labels[static_cast<std::size_t>(src_row)];
    }
  }
  return out;
}

fed::ClientPopulation repartition_population(const fed::ClientPopulation& population, double p,
                                             std::uint64_t seed) {
  fed::ClientPopulation out(population);
  if (p == 0.0) return out;
  rng::Stream stream(rng::derive(seed, {rng::tag("noise/repartition"),
                                        static_cast<std::uint64_t>(std::llround(p * 1e9))}));
  out.val_clients = repartition_iid(population.val_clients, p, stream);
  return out;
}

double private_release(double value, double sensitivity, rng::Stream& stream,
                       PrivacyLedger& ledger) {
  if (!(sensitivity > 0.0)) throw SpecError("private_release: sensitivity must be positive");
  ledger.consume();
  if (std::isinf(ledger.epsilon_total())) return value;
  const double scale = sensitivity / ledger.epsilon_per_query();
  return value + stream.laplace(scale);
}

std::vector<int> oneshot_topk(std::span<const double> scores, int k, int s, rng::Stream& stream,
                              PrivacyLedger& ledger) {
  const int n = static_cast<int>(scores.size());
  if (k < 1 || k > n) throw SpecError("oneshot_topk: k out of range");
  if (s < 1) throw SpecError("oneshot_topk: subsample size must be positive");
  ledger.consume();
  std::vector<double> noisy(scores.begin(), scores.end());
  if (!std::isinf(ledger.epsilon_total())) {
    const double scale = 2.0 * static_cast<double>(k) /
                         (ledger.epsilon_per_query() * static_cast<double>(s));
    for (double& v : noisy) v += stream.laplace(scale);
  }
  auto order = stats::argsort(noisy);
  order.resize(static_cast<std::size_t>(k));
  return {order.begin(), order.end()};
}

double noisy_evaluate(fed::Workload& workload, const hp::HpConfig& config, std::uint64_t uid,
                      int rounds, const EvalPolicy& policy, rng::Stream& stream,
                      PrivacyLedger* ledger) {
  const int n_val = workload.n_val();
  policy.validate(n_val);
  const auto errors = workload.client_errors(config, uid, rounds);
  const int s = policy.effective_subsample(n_val);

  std::vector<int> chosen;
  if (policy.bias_b > 0.0) {
    std::vector<double> accuracies(errors.size());
    for (std::size_t i = 0; i < errors.size(); ++i) accuracies[i] = 1.0 - errors[i];
    chosen = biased_sample(accuracies, policy.bias_b, policy.bias_delta, s, stream);
  } else if (s < n_val) {
    chosen = subsample_uniform(n_val, s, stream);
  } else {
    chosen.resize(static_cast<std::size_t>(n_val));
    std::iota(chosen.begin(), chosen.end(), 0);
  }

  std::vector<double> picked_errors;
  std::vector<double> picked_weights;
  picked_errors.reserve(chosen.size());
  picked_weights.reserve(chosen.size());
  const auto weights = workload.val_weights();
  for (int kk : chosen) {
    picked_errors.push_back(errors[static_cast<std::size_t>(kk)]);
    // The Laplace sensitivity bound (1/|S|) requires uniform aggregation, so
    // any active privacy mode overrides the population's weighting.
    picked_weights.push_back(policy.privacy.enabled() ? 1.0
                                                      : weights[static_cast<std::size_t>(kk)]);
  }
  double score = fed::aggregate_error(picked_errors, picked_weights);

  if (policy.privacy.mode == PrivacyMode::per_eval) {
    if (ledger == nullptr) {
      throw SpecError("noisy_evaluate: per-evaluation privacy requires a ledger");
    }
    score = private_release(score, 1.0 / static_cast<double>(s), stream, *ledger);
  }
  return score;
}

NoisyEvaluator::NoisyEvaluator(fed::Workload& workload, EvalPolicy policy,
                               std::uint64_t noise_seed, int planned_queries)
    : workload_(workload),
      policy_(policy),
      stream_(rng::derive(noise_seed, {rng::tag("noise/evaluator")})) {
  policy_.validate(workload_.n_val());
  if (policy_.privacy.enabled()) {
    ledger_.emplace(policy_.privacy.epsilon, planned_queries);
  }
}

double NoisyEvaluator::evaluate(const hp::HpConfig& config, std::uint64_t uid, int rounds) {
  return noisy_evaluate(workload_, config, uid, rounds, policy_, stream_,
                        ledger_ ? &*ledger_ : nullptr);
}

double NoisyEvaluator::full_error(const hp::HpConfig& config, std::uint64_t uid, int rounds) {
  return workload_.full_error(config, uid, rounds);
}

std::vector<int> NoisyEvaluator::select_topk(std::span<const double> scores, int k) {
  if (k < 1 || k > static_cast<int>(scores.size())) {
    throw SpecError("select_topk: k out of range");
  }
  if (policy_.privacy.mode == PrivacyMode::oneshot_topk) {
    return oneshot_topk(scores, k, policy_.effective_subsample(workload_.n_val()), stream_,
                        *ledger_);
  }
  auto order = stats::argsort(scores);
  order.resize(static_cast<std::size_t>(k));
  return {order.begin(), order.end()};
}

int NoisyEvaluator::trained_rounds(std::uint64_t uid) const {
  return workload_.trained_rounds(uid);
}

double NoisyEvaluator::epsilon_consumed() const {
  return ledger_ ? ledger_->epsilon_consumed() : 0.0;
}

}  // namespace fedtune::noise
