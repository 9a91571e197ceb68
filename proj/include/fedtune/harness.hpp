#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedtune/noise.hpp"
#include "fedtune/proxy.hpp"
#include "fedtune/tuners.hpp"
#include "fedtune/workload.hpp"

// Experiment harness: declarative experiment specs, the precomputed config
// pool that makes bootstrap studies cheap, trial orchestration over a grid of
// evaluation-noise conditions, and the summary/curve reductions behind the
// CSV outputs. Runs are deterministic in the master seed and idempotent on
// disk (grid points are content-addressed; finished ones are not recomputed).
namespace fedtune::harness {

enum class BackendKind { fedtrain, surrogate };
enum class TunerKind { rs, hyperband, tpe, bohb };

const char* backend_name(BackendKind k);
const char* tuner_name(TunerKind k);
BackendKind parse_backend(const std::string& name);  // throws SpecError
TunerKind parse_tuner(const std::string& name);

struct WorkloadSpec {
  BackendKind backend = BackendKind::fedtrain;
  fed::PopulationParams population;       // fedtrain backend
  fed::SurrogateParams surrogate;         // surrogate backend
};

struct SpaceSpec {
  int nested_width = 0;  // 0 = default space, 1..4 = nested server-lr space
};

hp::SearchSpace make_space(const SpaceSpec& spec);

// Grid axes of evaluation-noise conditions; the grid is their cross product.
// Conventions: subsample 0 = score every client; epsilon 0 = privacy off.
struct GridAxes {
  std::vector<int> subsample{0};
  std::vector<double> bias_b{0.0};
  std::vector<double> iid_p{0.0};
  std::vector<double> epsilon{0.0};
  noise::PrivacyMode privacy_mode = noise::PrivacyMode::per_eval;
  double bias_delta = 1e-4;
};

struct GridPoint {
  int subsample = 0;
  double bias_b = 0.0;
  double iid_p = 0.0;
  double epsilon = 0.0;
  noise::PrivacyMode privacy_mode = noise::PrivacyMode::per_eval;
  double bias_delta = 1e-4;

  // Canonical key, e.g. "subsample=full;bias_b=0;iid_p=0;epsilon=off".
  std::string key() const;
  std::uint64_t key_hash() const;  // FNV-1a of key(): content address + seed word
  // File stem of this grid point's record/trace files (hex of key_hash).
  std::string file_stem() const;
  noise::EvalPolicy policy(int n_val) const;
};

// Cross product in axis declaration order. Throws SpecError if any axis is
// empty or holds duplicate values.
std::vector<GridPoint> expand_grid(const GridAxes& axes);

struct ProxySpec {
  proxy::MismatchKnobs knobs;
  int scatter_configs = 64;
};

struct ExperimentSpec {
  std::uint64_t seed = 1;
  int trials = 100;
  int k = 16;             // configs per trial (RS / TPE)
  int rounds = 405;       // full fidelity per config
  int pool_size = 128;
  TunerKind tuner = TunerKind::rs;
  WorkloadSpec workload;
  SpaceSpec space;
  GridAxes grid;
  tuners::HyperbandParams hyperband;
  tuners::TpeParams tpe;
  ProxySpec proxy;

  void validate() const;  // throws SpecError
};

// ---- checkpoint pool ----

// The multi-fidelity checkpoint ladder (Hyperband's first-rung resources):
// {5, 15, 45, 135, 405} at the defaults.
std::vector<int> checkpoint_ladder(const tuners::HyperbandParams& params);

struct PoolEntry {
  hp::HpConfig config;
  // checkpoint rounds -> per-validation-client errors at that fidelity
  std::map<int, std::vector<double>> errors;
};

struct Pool {
  std::vector<int> checkpoints;
  std::vector<PoolEntry> entries;
  std::vector<double> val_weights;
  fed::WeightingMode mode = fed::WeightingMode::uniform;
  double iid_p = 0.0;
  std::uint64_t seed = 0;  // master seed it was built from

  int n_val() const { return static_cast<int>(val_weights.size()); }
  int size() const { return static_cast<int>(entries.size()); }
};

// Train `pool_size` sampled configs once, recording per-client validation
// errors at every checkpoint, evaluated against each iid_p variant of the
// validation split (training is shared across variants). Returns one pool per
// requested iid_p, in order.
std::vector<Pool> build_pools(const WorkloadSpec& workload, const hp::SearchSpace& space,
                              int pool_size, const std::vector<int>& checkpoints,
                              const std::vector<double>& iid_ps, std::uint64_t seed);

Pool build_pool(const WorkloadSpec& workload, const hp::SearchSpace& space, int pool_size,
                const std::vector<int>& checkpoints, double iid_p, std::uint64_t seed);

// Content-addressed pool file location: the name hashes every input that
// shapes the pool, so a stale file from a different spec is never reused.
std::filesystem::path pool_path(const ExperimentSpec& spec, double iid_p,
                                const std::filesystem::path& out_dir);

// Ensure pool files exist for every iid_p (in order, duplicates ignored):
// existing files are loaded, missing ones are built together (sharing the
// training pass) and saved. Returns the pools keyed by iid_p.
std::map<double, Pool> ensure_pools(const ExperimentSpec& spec, const hp::SearchSpace& space,
                                    const std::vector<double>& iid_ps,
                                    const std::filesystem::path& out_dir);

// Serves cached checkpoint errors as a Workload; `uid`s are pool indices and
// fidelities must be exact checkpoints.
class CachedPoolWorkload : public fed::Workload {
 public:
  explicit CachedPoolWorkload(const Pool& pool);

  int n_val() const override { return pool_.n_val(); }
  std::span<const double> val_weights() const override { return pool_.val_weights; }
  fed::WeightingMode weighting() const override { return pool_.mode; }
  std::vector<double> client_errors(const hp::HpConfig& config, std::uint64_t uid,
                                    int rounds) override;
  int trained_rounds(std::uint64_t uid) const override;

 private:
  const Pool& pool_;
  std::unordered_map<std::uint64_t, int> seen_;
};

// ---- trials and reductions ----

struct TrialRecord {
  GridPoint grid;
  int trial = 0;
  std::uint64_t trial_seed = 0;
  std::uint64_t chosen_config_id = 0;
  hp::HpConfig chosen_config;
  int chosen_rounds = 0;
  double chosen_score = 0.0;  // the (possibly noisy) score selection acted on
  double final_error = 0.0;   // exact objective of the chosen config
  int rounds_consumed = 0;
  double epsilon_consumed = 0.0;
};

// Per-trial observation traces live alongside records (for budget curves).
using TrialTrace = std::vector<tuners::Observation>;

// Monte-Carlo random search over a frozen pool: per trial, draw `k` distinct
// pool configs (without replacement; trials are independent), evaluate their
// cached full-fidelity errors under the grid point's noise policy, select, and
// record. Trial t's randomness derives from (seed, grid key, t).
std::vector<TrialRecord> bootstrap_rs(const Pool& pool, int k, int trials,
                                      const GridPoint& grid_point, std::uint64_t seed,
                                      std::vector<TrialTrace>* traces = nullptr);

struct SummaryRow {
  GridPoint grid;
  std::size_t count = 0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};

// Quantile summary (linear interpolation) of final errors, grouped by grid
// key, rows in order of first appearance.
std::vector<SummaryRow> summarize_records(std::span<const TrialRecord> records);

struct CurvePoint {
  GridPoint grid;
  int budget = 0;  // cumulative training rounds
  std::size_t count = 0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};

// Anytime quality: at each budget, each trial contributes the exact objective
// of its incumbent (lowest score so far, ties to the earliest config id). With
// noiseless scores the per-trial curve is non-increasing and ends at the
// trial's final selection.
std::vector<CurvePoint> budget_curve(const std::vector<TrialTrace>& traces,
                                     std::span<const int> budgets, const GridPoint& grid_point);

// All distinct observation budgets across traces, ascending.
std::vector<int> observed_budgets(const std::vector<TrialTrace>& traces);

// ---- orchestration ----

struct RunOutput {
  std::filesystem::path records_path;
  std::filesystem::path summary_path;
  std::filesystem::path curves_path;
  int grid_points = 0;
  int trials_run = 0;     // freshly computed (not loaded from existing files)
  int trials_loaded = 0;  // served from existing grid-point files
};

// Execute the spec into out_dir: per-grid-point record/trace files (skipped if
// already present), then merged records.jsonl, summary.csv and curves.csv.
// Reruns with the same spec and seed produce byte-identical outputs.
RunOutput run(const ExperimentSpec& spec, const std::filesystem::path& out_dir);

// ---- proxy experiment entry points (proxy subcommand) ----

struct ProxyTrialRecord {
  int trial = 0;
  std::uint64_t trial_seed = 0;
  std::uint64_t chosen_config_id = 0;
  hp::HpConfig chosen_config;
  double proxy_score = 0.0;   // best proxy objective during the search
  double target_error = 0.0;  // deployed exact target objective
  double epsilon_consumed = 0.0;  // always 0
};

struct ProxyRunResult {
  std::vector<ProxyTrialRecord> records;
  proxy::ScatterResult scatter;
};

// One-shot proxy RS repeated `trials` times plus the transfer scatter, on the
// pair implied by the workload spec and mismatch knobs. The target-side noise
// policy (any grid point) is validated but cannot influence the outcome.
ProxyRunResult run_proxy(const ExperimentSpec& spec, const GridPoint& target_point);

}  // namespace fedtune::harness
