#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fedtune/hp_space.hpp"
#include "fedtune/noise.hpp"
#include "fedtune/rng.hpp"

// Hyperparameter tuners over a noisy evaluator: random search, successive
// halving, Hyperband, TPE and BOHB. All of them speak the same vocabulary —
// they suggest configs (sequential uids starting at 0), observe noisy scores
// through a noise::Evaluator, charge every training round to a BudgetLedger,
// and end with select_final over their observation trace. Score selections of
// rung-based tuners go through Evaluator::select_topk so that private
// selection uses the one-shot mechanism.
namespace fedtune::tuners {

// Round budget of one tuning trial: 16 configs x 405 rounds.
inline constexpr int kTotalRoundBudget = 6480;
inline constexpr int kPerConfigRoundCap = 405;

// Tracks training rounds consumed by a trial, per config and in total.
// Training a config is always expressed as "bring uid to N cumulative rounds";
// the ledger charges the increment.
class BudgetLedger {
 public:
  explicit BudgetLedger(int total_rounds = kTotalRoundBudget,
                        int per_config_cap = kPerConfigRoundCap);

  int total() const { return total_; }
  int per_config_cap() const { return cap_; }
  int consumed() const { return consumed_; }
  int remaining() const { return total_ - consumed_; }
  int config_rounds(std::uint64_t uid) const;
  bool can_train_to(std::uint64_t uid, int cumulative_rounds) const;
  // Charge the increment up to cumulative_rounds. Throws BudgetExhausted if it
  // would exceed the total budget or the per-config cap.
  void train_to(std::uint64_t uid, int cumulative_rounds);

 private:
  int total_;
  int cap_;
  int consumed_ = 0;
  std::unordered_map<std::uint64_t, int> per_config_;
};

// One (config, fidelity) evaluation as the tuner saw it.
struct Observation {
  std::uint64_t config_id = 0;
  hp::HpConfig config;
  int rounds = 0;         // fidelity of this evaluation
  double score = 0.0;     // noisy objective the tuner acted on
  int budget_after = 0;   // trial rounds consumed when this was observed
  double true_error = 0;  // exact objective at (config, rounds); reporting only
};

struct RungRecord {
  int resource = 0;                        // rounds per entrant at this rung
  std::vector<std::uint64_t> entrants;     // ascending config ids
  std::vector<std::uint64_t> survivors;    // promoted to the next rung (empty at the last)
};

struct BracketRecord {
  int s = 0;          // Hyperband bracket index (0 for standalone halving)
  int r0 = 0;         // first-rung resource
  int n0 = 0;         // planned entrant count
  bool truncated = false;  // a rung was skipped because the budget ran out
  std::vector<RungRecord> rungs;
};

struct TunerResult {
  std::vector<Observation> trace;
  std::vector<BracketRecord> brackets;  // empty for RS / TPE
  std::uint64_t best_id = 0;
  hp::HpConfig best_config;
  int best_rounds = 0;      // fidelity at which the winner was observed
  double best_score = 0.0;  // the winning observation's score (simulation-side)
  double final_error = 0.0; // exact objective of the winner at best_rounds
  int rounds_consumed = 0;
  double epsilon_consumed = 0.0;
  // BOHB diagnostics: per suggested config, the rung fidelity its model was
  // fitted on (-1 = uniform fallback). Empty for the other tuners.
  std::vector<int> model_fidelity;
};

struct Entry {
  std::uint64_t id = 0;
  hp::HpConfig config;
};

// ---- planning (budget- and privacy-accounting ahead of any evaluation) ----

struct RungPlan {
  int resource = 0;
  int n = 0;
};

// The rung ladder successive halving runs from n0 configs at r0: keep
// floor(n/eta) after each rung, grow the resource eta-fold up to `cap`.
std::vector<RungPlan> plan_bracket(int n0, int r0, int eta, int cap);

struct HyperbandParams {
  int max_resource = 405;  // R: full-fidelity rounds per config
  int eta = 3;
  int s_max = 4;  // brackets s_max..0; first rung of bracket s is R/eta^s
};

struct QueryPlan {
  int evaluations = 0;   // score releases if every rung runs (per_eval mode M)
  int eliminations = 0;  // rung promotions (selection events)
};

QueryPlan plan_rs(int k);
QueryPlan plan_sha(int n0, int r0, int eta, int cap);
QueryPlan plan_hyperband(const HyperbandParams& params);

// Queries the privacy ledger must be split across: per_eval -> all score
// releases; oneshot_topk -> eliminations + 1 final selection.
int planned_queries(const QueryPlan& plan, noise::PrivacyMode mode);

// ---- tuners ----

// Evaluate k configs at full fidelity, sampled lazily from the space.
TunerResult rs_run(const hp::SearchSpace& space, noise::Evaluator& ev, int k, int rounds,
                   std::uint64_t seed, BudgetLedger ledger = BudgetLedger());

// Random search over a fixed, externally chosen config set (bootstrap path).
TunerResult rs_run_fixed(std::span<const Entry> entries, noise::Evaluator& ev, int rounds,
                         BudgetLedger ledger = BudgetLedger());

// One successive-halving bracket over fixed entries. Rungs that no longer fit
// the remaining budget are skipped and flagged, not an error.
TunerResult sha_run(std::span<const Entry> entries, int eta, int r0, int cap,
                    noise::Evaluator& ev, BudgetLedger ledger = BudgetLedger());

TunerResult hyperband_run(const hp::SearchSpace& space, noise::Evaluator& ev,
                          const HyperbandParams& params, std::uint64_t seed,
                          BudgetLedger ledger = BudgetLedger());

// ---- TPE ----

struct TpeParams {
  double gamma = 0.25;      // good/bad split quantile
  int n_candidates = 24;    // draws from the good density per suggestion
  int n_min = 8;            // observations required before the model switches on
  double bandwidth_floor = 1e-3;  // kernel bandwidth floor, as a fraction of range
};

// Indices of the good (score < gamma-quantile) and bad observations.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> tpe_split(
    std::span<const double> scores, double gamma);

// Per-dimension density pair fitted on an observation set: Gaussian KDE in
// transformed coordinates for continuous dimensions, add-one-smoothed
// frequency tables for categorical ones. Fixed dimensions are ignored.
class TpeModel {
 public:
  TpeModel(const hp::SearchSpace& space, std::span<const hp::HpConfig> configs,
           std::span<const double> scores, const TpeParams& params);

  // False when there are too few observations or the split degenerates
  // (either group empty) — callers fall back to uniform sampling.
  bool usable() const { return usable_; }
  // Draw one config from the good density (kernels chosen per dimension
  // independently; rejection into bounds, clamped after 100 tries).
  hp::HpConfig sample(rng::Stream& stream) const;
  double good_density(const hp::HpConfig& config) const;
  double bad_density(const hp::HpConfig& config) const;
  // Best of n_candidates draws by bad/good density ratio (ties: first drawn).
  hp::HpConfig suggest(rng::Stream& stream) const;

 private:
  struct ContinuousDim {
    std::string name;
    bool log_scale = false;
    double lo = 0.0, hi = 0.0;
    std::vector<double> good_centers, bad_centers;
    double good_bw = 0.0, bad_bw = 0.0;
  };
  struct CategoricalDim {
    std::string name;
    std::vector<double> choices;
    std::vector<double> good_prob, bad_prob;
  };
  struct FixedDim {
    std::string name;
    double value = 0.0;
  };

  double density(const hp::HpConfig& config, bool good) const;

  std::vector<ContinuousDim> continuous_;
  std::vector<CategoricalDim> categorical_;
  std::vector<FixedDim> fixed_;
  TpeParams params_;
  bool usable_ = false;
};

// One TPE suggestion from an observation history; uniform sample_config draw
// (same stream) when the model is unusable.
hp::HpConfig tpe_suggest(const hp::SearchSpace& space, std::span<const hp::HpConfig> configs,
                         std::span<const double> scores, const TpeParams& params,
                         rng::Stream& stream);

// Sequential TPE: k configs at full fidelity, each suggested from all previous
// observations.
TunerResult tpe_run(const hp::SearchSpace& space, noise::Evaluator& ev, int k, int rounds,
                    const TpeParams& tpe, std::uint64_t seed, BudgetLedger ledger = BudgetLedger());

// Hyperband with model-based sampling: new bracket entrants come from a TPE
// model fitted on the highest-fidelity rung that has at least n_min
// observations (uniform from the same stream until one exists).
TunerResult bohb_run(const hp::SearchSpace& space, noise::Evaluator& ev,
                     const HyperbandParams& params, const TpeParams& tpe, std::uint64_t seed,
                     BudgetLedger ledger = BudgetLedger());

// ---- final selection ----

struct Selection {
  std::size_t obs_index = 0;  // into the trace
  std::uint64_t config_id = 0;
  int rounds = 0;
  double score = 0.0;
};

// Pick the winning observation: scores are fed to Evaluator::select_topk(k=1)
// in (config_id, rounds) order, so exact selection breaks score ties toward
// the earliest config id (then the lower fidelity); private selection routes
// through the one-shot mechanism and costs one selection event.
Selection select_final(std::span<const Observation> trace, noise::Evaluator& ev);

}  // namespace fedtune::tuners
