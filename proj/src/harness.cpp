#include "fedtune/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <utility>

#include "fedtune/errors.hpp"
#include "fedtune/json_io.hpp"
#include "fedtune/stats.hpp"

namespace fedtune::harness {

namespace {

// Seed-derivation domain tags. Every random decision of the harness lives in
// its own namespace under the master seed; trial streams additionally mix in
// the grid-point hash so different noise conditions never share randomness.
constexpr std::uint64_t kTagPopulation = rng::tag("harness/population");
constexpr std::uint64_t kTagSurrogate = rng::tag("harness/surrogate");
constexpr std::uint64_t kTagPoolConfigs = rng::tag("harness/pool-configs");
constexpr std::uint64_t kTagPoolTrain = rng::tag("harness/pool-train");
constexpr std::uint64_t kTagTrial = rng::tag("harness/trial");
constexpr std::uint64_t kTagResample = rng::tag("harness/resample");
constexpr std::uint64_t kTagEval = rng::tag("harness/eval");
constexpr std::uint64_t kTagTrain = rng::tag("harness/train");
constexpr std::uint64_t kTagScatter = rng::tag("harness/scatter");
constexpr std::uint64_t kTagProxy = rng::tag("harness/proxy-response");

template <class T>
void check_axis(const std::vector<T>& axis, const char* name) {
  if (axis.empty()) throw SpecError(std::string("grid axis '") + name + "' is empty");
  std::set<T> distinct(axis.begin(), axis.end());
  if (distinct.size() != axis.size()) {
    throw SpecError(std::string("grid axis '") + name + "' holds duplicate values");
  }
}

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

const char* backend_name(BackendKind k) {
  return k == BackendKind::surrogate ? "surrogate" : "fedtrain";
}

const char* tuner_name(TunerKind k) {
  switch (k) {
    case TunerKind::rs: return "rs";
    case TunerKind::hyperband: return "hyperband";
    case TunerKind::tpe: return "tpe";
    case TunerKind::bohb: return "bohb";
  }
  return "rs";
}

BackendKind parse_backend(const std::string& name) {
  if (name == "fedtrain") return BackendKind::fedtrain;
  if (name == "surrogate") return BackendKind::surrogate;
  throw SpecError("unknown workload backend: " + name + " (expected fedtrain or surrogate)");
}

TunerKind parse_tuner(const std::string& name) {
  if (name == "rs") return TunerKind::rs;
  if (name == "hyperband") return TunerKind::hyperband;
  if (name == "tpe") return TunerKind::tpe;
  if (name == "bohb") return TunerKind::bohb;
  throw SpecError("unknown tuner: " + name + " (expected rs, hyperband, tpe or bohb)");
}

hp::SearchSpace make_space(const SpaceSpec& spec) {
  if (spec.nested_width == 0) return hp::default_space();
  return hp::nested_server_lr_space(spec.nested_width);
}

std::string GridPoint::key() const {
  std::string out = "subsample=";
  out += subsample == 0 ? "full" : std::to_string(subsample);
  out += ";bias_b=" + io::format_double(bias_b);
  // bias_delta only matters when bias is on; keep keys canonical otherwise
  if (bias_b != 0.0 && bias_delta != 1e-4) {
    out += ";bias_delta=" + io::format_double(bias_delta);
  }
  out += ";iid_p=" + io::format_double(iid_p);
  if (epsilon == 0.0) {
    out += ";epsilon=off";
  } else {
    out += ";epsilon=" + io::format_double(epsilon);
    out += privacy_mode == noise::PrivacyMode::oneshot_topk ? ";mode=oneshot_topk"
                                                            : ";mode=per_eval";
  }
  return out;
}

std::uint64_t GridPoint::key_hash() const { return rng::tag(key().c_str()); }

std::string GridPoint::file_stem() const { return hex16(key_hash()); }

noise::EvalPolicy GridPoint::policy(int n_val) const {
  noise::EvalPolicy p;
  if (subsample != 0) p.subsample = subsample;
  p.bias_b = bias_b;
  p.bias_delta = bias_delta;
  p.iid_p = iid_p;
  if (epsilon != 0.0) {
    p.privacy.epsilon = epsilon;
    p.privacy.mode = privacy_mode;
  }
  p.validate(n_val);
  return p;
}

std::vector<GridPoint> expand_grid(const GridAxes& axes) {
  check_axis(axes.subsample, "subsample");
  check_axis(axes.bias_b, "bias_b");
  check_axis(axes.iid_p, "iid_p");
  check_axis(axes.epsilon, "epsilon");
  for (int s : axes.subsample) {
    if (s < 0) throw SpecError("grid axis 'subsample' must be nonnegative (0 = score all)");
  }
  for (double b : axes.bias_b) {
    if (!(b >= 0.0)) throw SpecError("grid axis 'bias_b' must be nonnegative");
  }
  for (double p : axes.iid_p) {
    if (!(p >= 0.0 && p <= 1.0)) throw SpecError("grid axis 'iid_p' must lie in [0, 1]");
  }
  for (double e : axes.epsilon) {
    if (!(e >= 0.0)) throw SpecError("grid axis 'epsilon' must be nonnegative (0 = off)");
  }
  if (!(axes.bias_delta > 0.0)) throw SpecError("grid bias_delta must be positive");

  std::vector<GridPoint> grid;
  for (int s : axes.subsample) {
    for (double b : axes.bias_b) {
      for (double p : axes.iid_p) {
        for (double e : axes.epsilon) {
          GridPoint gp;
          gp.subsample = s;
          gp.bias_b = b;
          gp.iid_p = p;
          gp.epsilon = e;
          gp.privacy_mode = axes.privacy_mode;
          gp.bias_delta = axes.bias_delta;
          grid.push_back(gp);
        }
      }
    }
  }
  return grid;
}

void ExperimentSpec::validate() const {
  if (trials < 1) throw SpecError("spec: trials must be at least 1");
  if (k < 1) throw SpecError("spec: k must be at least 1");
  if (rounds < 1) throw SpecError("spec: rounds must be at least 1");
  if (pool_size < 1) throw SpecError("spec: pool_size must be at least 1");
  const auto grid_points = expand_grid(grid);

  if (workload.backend == BackendKind::fedtrain) {
    const auto& p = workload.population;
    if (p.n_train < fed::kClientsPerRound) {
      throw SpecError("spec: population needs at least " +
                      std::to_string(fed::kClientsPerRound) + " training clients");
    }
    if (p.n_val < 1) throw SpecError("spec: population needs validation clients");
    if (p.classes < 2) throw SpecError("spec: population needs at least 2 classes");
    if (p.dim < 1) throw SpecError("spec: population feature dim must be positive");
    if (p.samples_per_client < 1) throw SpecError("spec: samples_per_client must be positive");
    if (p.samples_spread < 0 || p.samples_spread >= p.samples_per_client) {
      throw SpecError("spec: samples_spread must lie in [0, samples_per_client)");
    }
    if (!(p.alpha > 0.0)) throw SpecError("spec: population alpha must be positive");
    if (!(p.feature_sigma >= 0.0)) throw SpecError("spec: feature_sigma must be nonnegative");
  } else {
    const auto& s = workload.surrogate;
    if (s.n_val < 1) throw SpecError("spec: surrogate needs validation clients");
    if (s.n_outliers < 0 || s.n_outliers > s.n_val) {
      throw SpecError("spec: surrogate n_outliers must lie in [0, n_val]");
    }
    if (!(s.curvature_scale >= 0.0) || !(s.choice_scale >= 0.0) || !(s.offset_sigma >= 0.0)) {
      throw SpecError("spec: surrogate scales must be nonnegative");
    }
    if (!(s.base >= 0.0)) throw SpecError("spec: surrogate base must be nonnegative");
    if (!(s.floor >= 0.0 && s.floor <= 1.0)) {
      throw SpecError("spec: surrogate floor must lie in [0, 1]");
    }
    if (!(s.halflife > 0.0)) throw SpecError("spec: surrogate halflife must be positive");
    // The surrogate has no validation data, so there is nothing to repartition.
    for (const auto& gp : grid_points) {
      if (gp.iid_p != 0.0) {
        throw SpecError("spec: iid_p repartition requires the fedtrain backend");
      }
    }
  }

  if (space.nested_width != 0 && (space.nested_width < 1 || space.nested_width > 4)) {
    throw SpecError("spec: nested_width must be 0 (default space) or 1..4");
  }

  if (tuner == TunerKind::rs) {
    if (pool_size < k) throw SpecError("spec: pool_size must be at least k for random search");
    const auto ladder = checkpoint_ladder(hyperband);
    if (std::find(ladder.begin(), ladder.end(), rounds) == ladder.end()) {
      throw SpecError("spec: rounds must be one of the checkpoint fidelities for random search");
    }
  }
  if (tuner == TunerKind::hyperband || tuner == TunerKind::bohb) {
    tuners::plan_hyperband(hyperband);  // validates eta / s_max / divisibility
  }
  if (tuner == TunerKind::tpe || tuner == TunerKind::bohb) {
    if (!(tpe.gamma > 0.0 && tpe.gamma < 1.0)) throw SpecError("spec: tpe gamma must lie in (0, 1)");
    if (tpe.n_candidates < 1) throw SpecError("spec: tpe n_candidates must be positive");
    if (tpe.n_min < 1) throw SpecError("spec: tpe n_min must be positive");
    if (!(tpe.bandwidth_floor > 0.0)) throw SpecError("spec: tpe bandwidth_floor must be positive");
  }
  if (proxy.scatter_configs < 2) {
    throw SpecError("spec: proxy scatter needs at least 2 configs");
  }
}

std::vector<int> checkpoint_ladder(const tuners::HyperbandParams& params) {
  if (params.eta < 2) throw SpecError("checkpoint ladder: eta must be at least 2");
  if (params.s_max < 0) throw SpecError("checkpoint ladder: s_max must be nonnegative");
  if (params.max_resource < 1) throw SpecError("checkpoint ladder: max_resource must be positive");
  std::vector<int> ladder;
  for (int s = params.s_max; s >= 0; --s) {
    std::int64_t div = 1;
    for (int i = 0; i < s; ++i) div *= params.eta;
    if (params.max_resource % div != 0) {
      throw SpecError("checkpoint ladder: max_resource must be divisible by eta^s_max");
    }
    ladder.push_back(static_cast<int>(params.max_resource / div));
  }
  return ladder;
}

// ---- checkpoint pool ----

std::vector<Pool> build_pools(const WorkloadSpec& workload, const hp::SearchSpace& space,
                              int pool_size, const std::vector<int>& checkpoints,
                              const std::vector<double>& iid_ps, std::uint64_t seed) {
  if (pool_size < 1) throw SpecError("pool: pool_size must be positive");
  if (checkpoints.empty()) throw SpecError("pool: checkpoint ladder is empty");
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    if (checkpoints[i] < 1) throw SpecError("pool: checkpoints must be positive");
    if (i > 0 && checkpoints[i] <= checkpoints[i - 1]) {
      throw SpecError("pool: checkpoints must be strictly ascending");
    }
  }
  if (iid_ps.empty()) throw SpecError("pool: no iid_p variants requested");
  for (double p : iid_ps) {
    if (!(p >= 0.0 && p <= 1.0)) throw SpecError("pool: iid_p must lie in [0, 1]");
  }

  rng::Stream config_stream(rng::derive(seed, {kTagPoolConfigs}));
  std::vector<hp::HpConfig> configs;
  configs.reserve(static_cast<std::size_t>(pool_size));
  for (int i = 0; i < pool_size; ++i) configs.push_back(hp::sample_config(space, config_stream));

  std::vector<Pool> pools(iid_ps.size());
  for (std::size_t v = 0; v < iid_ps.size(); ++v) {
    pools[v].checkpoints = checkpoints;
    pools[v].iid_p = iid_ps[v];
    pools[v].seed = seed;
    pools[v].entries.resize(static_cast<std::size_t>(pool_size));
    for (int i = 0; i < pool_size; ++i) {
      pools[v].entries[static_cast<std::size_t>(i)].config = configs[static_cast<std::size_t>(i)];
    }
  }

  if (workload.backend == BackendKind::surrogate) {
    for (double p : iid_ps) {
      if (p != 0.0) throw SpecError("pool: iid_p repartition requires the fedtrain backend");
    }
    auto response = fed::make_surrogate(space, workload.surrogate,
                                        rng::derive(seed, {kTagSurrogate}));
    fed::SurrogateWorkload w(std::move(response), space);
    std::vector<PoolEntry> entries(static_cast<std::size_t>(pool_size));
    for (int i = 0; i < pool_size; ++i) {
      auto& entry = entries[static_cast<std::size_t>(i)];
      entry.config = configs[static_cast<std::size_t>(i)];
      for (int c : checkpoints) {
        entry.errors[c] = w.client_errors(entry.config, static_cast<std::uint64_t>(i), c);
      }
    }
    const std::vector<double> weights(w.val_weights().begin(), w.val_weights().end());
    for (auto& pool : pools) {
      pool.entries = entries;
      pool.val_weights = weights;
      pool.mode = fed::WeightingMode::uniform;
    }
    return pools;
  }

  // fedtrain: one shared training pass, scored against each iid_p variant of
  // the validation split.
  const std::uint64_t pop_seed = rng::derive(seed, {kTagPopulation});
  auto base = std::make_shared<const fed::ClientPopulation>(
      fed::generate_population(workload.population, pop_seed));
  std::vector<std::shared_ptr<const fed::ClientPopulation>> variants;
  variants.reserve(iid_ps.size());
  for (std::size_t v = 0; v < iid_ps.size(); ++v) {
    if (iid_ps[v] == 0.0) {
      variants.push_back(base);
    } else {
      variants.push_back(std::make_shared<const fed::ClientPopulation>(
          noise::repartition_population(*base, iid_ps[v], pop_seed)));
    }
    pools[v].val_weights = variants[v]->val_weights;
    pools[v].mode = variants[v]->mode;
  }

  fed::FedWorkload trainer(base, rng::derive(seed, {kTagPoolTrain}));
  for (int i = 0; i < pool_size; ++i) {
    const auto uid = static_cast<std::uint64_t>(i);
    const auto& config = configs[static_cast<std::size_t>(i)];
    for (int c : checkpoints) {
      auto base_errors = trainer.client_errors(config, uid, c);
      const fed::ModelState& model = trainer.model(uid);
      for (std::size_t v = 0; v < iid_ps.size(); ++v) {
        auto& slot = pools[v].entries[static_cast<std::size_t>(i)].errors[c];
        if (iid_ps[v] == 0.0) {
          slot = base_errors;
        } else {
          slot = fed::per_client_errors(model, *variants[v]);
        }
      }
    }
  }
  return pools;
}

Pool build_pool(const WorkloadSpec& workload, const hp::SearchSpace& space, int pool_size,
                const std::vector<int>& checkpoints, double iid_p, std::uint64_t seed) {
  auto pools = build_pools(workload, space, pool_size, checkpoints, {iid_p}, seed);
  return std::move(pools.front());
}

CachedPoolWorkload::CachedPoolWorkload(const Pool& pool) : pool_(pool) {
  if (pool_.entries.empty()) throw SpecError("pool workload: pool is empty");
  if (pool_.val_weights.empty()) throw SpecError("pool workload: pool has no validation weights");
}

std::vector<double> CachedPoolWorkload::client_errors(const hp::HpConfig& config,
                                                      std::uint64_t uid, int rounds) {
  if (uid >= pool_.entries.size()) {
    throw SpecError("pool workload: unknown config uid " + std::to_string(uid));
  }
  const PoolEntry& entry = pool_.entries[static_cast<std::size_t>(uid)];
  if (!(config == entry.config)) {
    throw SpecError("pool workload: config does not match pool entry " + std::to_string(uid));
  }
  const auto seen = seen_.find(uid);
  if (seen != seen_.end() && rounds < seen->second) {
    throw SpecError("pool workload: fidelity for a uid must never decrease");
  }
  const auto it = entry.errors.find(rounds);
  if (it == entry.errors.end()) {
    throw SpecError("pool workload: " + std::to_string(rounds) +
                    " rounds is not a pool checkpoint");
  }
  seen_[uid] = rounds;
  return it->second;
}

int CachedPoolWorkload::trained_rounds(std::uint64_t uid) const {
  const auto it = seen_.find(uid);
  return it == seen_.end() ? 0 : it->second;
}

// ---- trials and reductions ----

namespace {

TrialRecord to_record(const GridPoint& gp, int trial, std::uint64_t trial_seed,
                      const tuners::TunerResult& res) {
  TrialRecord rec;
  rec.grid = gp;
  rec.trial = trial;
  rec.trial_seed = trial_seed;
  rec.chosen_config_id = res.best_id;
  rec.chosen_config = res.best_config;
  rec.chosen_rounds = res.best_rounds;
  rec.chosen_score = res.best_score;
  rec.final_error = res.final_error;
  rec.rounds_consumed = res.rounds_consumed;
  rec.epsilon_consumed = res.epsilon_consumed;
  return rec;
}

}  // namespace

std::vector<TrialRecord> bootstrap_rs(const Pool& pool, int k, int trials,
                                      const GridPoint& grid_point, std::uint64_t seed,
                                      std::vector<TrialTrace>* traces) {
  if (k < 1) throw SpecError("bootstrap: k must be positive");
  if (k > pool.size()) throw SpecError("bootstrap: k exceeds the pool size");
  if (trials < 1) throw SpecError("bootstrap: trials must be positive");
  if (pool.checkpoints.empty()) throw SpecError("bootstrap: pool has no checkpoints");
  const int full = pool.checkpoints.back();
  const noise::EvalPolicy policy = grid_point.policy(pool.n_val());
  const int planned = tuners::planned_queries(tuners::plan_rs(k), policy.privacy.mode);

  std::vector<TrialRecord> records;
  records.reserve(static_cast<std::size_t>(trials));
  for (int t = 0; t < trials; ++t) {
    const std::uint64_t trial_seed =
        rng::derive(seed, {kTagTrial, grid_point.key_hash(), static_cast<std::uint64_t>(t)});
    rng::Stream resample(rng::derive(trial_seed, {kTagResample}));
    const auto picks = resample.sample_without_replacement(pool.size(), k);
    std::vector<tuners::Entry> entries;
    entries.reserve(picks.size());
    for (int idx : picks) {
      entries.push_back({static_cast<std::uint64_t>(idx),
                         pool.entries[static_cast<std::size_t>(idx)].config});
    }
    CachedPoolWorkload workload(pool);
    noise::NoisyEvaluator ev(workload, policy, rng::derive(trial_seed, {kTagEval}), planned);
    auto res = tuners::rs_run_fixed(entries, ev, full);
    records.push_back(to_record(grid_point, t, trial_seed, res));
    if (traces) traces->push_back(std::move(res.trace));
  }
  return records;
}

std::vector<SummaryRow> summarize_records(std::span<const TrialRecord> records) {
  std::vector<SummaryRow> rows;
  std::vector<std::vector<double>> groups;
  std::map<std::string, std::size_t> index;
  for (const auto& rec : records) {
    const std::string key = rec.grid.key();
    auto [it, fresh] = index.try_emplace(key, rows.size());
    if (fresh) {
      SummaryRow row;
      row.grid = rec.grid;
      rows.push_back(row);
      groups.emplace_back();
    }
    groups[it->second].push_back(rec.final_error);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto s = stats::summarize(groups[i]);
    rows[i].count = s.count;
    rows[i].median = s.median;
    rows[i].q1 = s.q1;
    rows[i].q3 = s.q3;
  }
  return rows;
}

std::vector<CurvePoint> budget_curve(const std::vector<TrialTrace>& traces,
                                     std::span<const int> budgets, const GridPoint& grid_point) {
  // Per trace: after each observation, the exact objective of the incumbent
  // (lowest score so far; ties to the earliest config id, then lower fidelity).
  struct Step {
    int budget_after;
    double incumbent_error;
  };
  std::vector<std::vector<Step>> steps;
  steps.reserve(traces.size());
  for (const auto& trace : traces) {
    std::vector<Step> s;
    s.reserve(trace.size());
    const tuners::Observation* best = nullptr;
    for (const auto& obs : trace) {
      if (best != nullptr && obs.budget_after < best->budget_after) {
        throw SpecError("budget curve: trace budgets must be non-decreasing");
      }
      const bool better =
          best == nullptr || obs.score < best->score ||
          (obs.score == best->score &&
           (obs.config_id < best->config_id ||
            (obs.config_id == best->config_id && obs.rounds < best->rounds)));
      if (better) best = &obs;
      s.push_back({obs.budget_after, best->true_error});
    }
    steps.push_back(std::move(s));
  }

  std::vector<CurvePoint> points;
  for (int budget : budgets) {
    std::vector<double> errors;
    for (const auto& s : steps) {
      // last step whose budget does not exceed `budget`
      const auto it = std::upper_bound(
          s.begin(), s.end(), budget,
          [](int b, const Step& step) { return b < step.budget_after; });
      if (it != s.begin()) errors.push_back(std::prev(it)->incumbent_error);
    }
    if (errors.empty()) continue;
    CurvePoint pt;
    pt.grid = grid_point;
    pt.budget = budget;
    const auto s = stats::summarize(errors);
    pt.count = s.count;
    pt.median = s.median;
    pt.q1 = s.q1;
    pt.q3 = s.q3;
    points.push_back(pt);
  }
  return points;
}

std::vector<int> observed_budgets(const std::vector<TrialTrace>& traces) {
  std::set<int> budgets;
  for (const auto& trace : traces) {
    for (const auto& obs : trace) budgets.insert(obs.budget_after);
  }
  return {budgets.begin(), budgets.end()};
}

// ---- orchestration ----

namespace {

// Content address of a pool file: every input that shapes the pool.
std::uint64_t pool_key_hash(const ExperimentSpec& spec, const std::vector<int>& checkpoints,
                            double iid_p) {
  io::json key{{"backend", backend_name(spec.workload.backend)},
               {"nested_width", spec.space.nested_width},
               {"pool_size", spec.pool_size},
               {"checkpoints", checkpoints},
               {"iid_p", iid_p},
               {"seed", spec.seed}};
  if (spec.workload.backend == BackendKind::fedtrain) {
    const auto& p = spec.workload.population;
    key["population"] = io::json{{"n_train", p.n_train},
                                 {"n_val", p.n_val},
                                 {"classes", p.classes},
                                 {"dim", p.dim},
                                 {"samples_per_client", p.samples_per_client},
                                 {"samples_spread", p.samples_spread},
                                 {"alpha", p.alpha},
                                 {"feature_sigma", p.feature_sigma},
                                 {"weighted", p.mode == fed::WeightingMode::weighted}};
  } else {
    const auto& s = spec.workload.surrogate;
    key["surrogate"] = io::json{{"n_val", s.n_val},
                                {"curvature_scale", s.curvature_scale},
                                {"choice_scale", s.choice_scale},
                                {"offset_sigma", s.offset_sigma},
                                {"n_outliers", s.n_outliers},
                                {"outlier_offset", s.outlier_offset},
                                {"base", s.base},
                                {"floor", s.floor},
                                {"halflife", s.halflife}};
  }
  return rng::tag(key.dump().c_str());
}

}  // namespace

std::filesystem::path pool_path(const ExperimentSpec& spec, double iid_p,
                                const std::filesystem::path& out_dir) {
  const auto checkpoints = checkpoint_ladder(spec.hyperband);
  return out_dir / ("pool_" + hex16(pool_key_hash(spec, checkpoints, iid_p)) + ".jsonl");
}

std::map<double, Pool> ensure_pools(const ExperimentSpec& spec, const hp::SearchSpace& space,
                                    const std::vector<double>& iid_ps,
                                    const std::filesystem::path& out_dir) {
  const auto checkpoints = checkpoint_ladder(spec.hyperband);
  std::vector<double> wanted;
  for (double p : iid_ps) {
    if (std::find(wanted.begin(), wanted.end(), p) == wanted.end()) wanted.push_back(p);
  }
  std::map<double, Pool> pools;
  std::vector<double> missing;
  for (double p : wanted) {
    const auto path = pool_path(spec, p, out_dir);
    if (std::filesystem::exists(path)) {
      pools.emplace(p, io::load_pool(path));
    } else {
      missing.push_back(p);
    }
  }
  if (!missing.empty()) {
    auto built =
        build_pools(spec.workload, space, spec.pool_size, checkpoints, missing, spec.seed);
    for (std::size_t i = 0; i < missing.size(); ++i) {
      io::save_pool(built[i], pool_path(spec, missing[i], out_dir));
      pools.emplace(missing[i], std::move(built[i]));
    }
  }
  return pools;
}

namespace {

// Shared state for live (non-pooled) tuner trials.
struct LiveContext {
  std::shared_ptr<const fed::ClientPopulation> base;
  std::map<double, std::shared_ptr<const fed::ClientPopulation>> variants;
  std::optional<fed::SurrogateResponse> response;

  std::shared_ptr<const fed::ClientPopulation> variant(double iid_p, std::uint64_t pop_seed) {
    auto it = variants.find(iid_p);
    if (it != variants.end()) return it->second;
    auto v = iid_p == 0.0 ? base
                          : std::make_shared<const fed::ClientPopulation>(
                                noise::repartition_population(*base, iid_p, pop_seed));
    variants.emplace(iid_p, v);
    return v;
  }
};

std::vector<TrialRecord> live_trials(const ExperimentSpec& spec, const hp::SearchSpace& space,
                                     const GridPoint& gp, LiveContext& ctx,
                                     std::vector<TrialTrace>& traces) {
  const std::uint64_t pop_seed = rng::derive(spec.seed, {kTagPopulation});
  const bool rung_based = spec.tuner == TunerKind::hyperband || spec.tuner == TunerKind::bohb;
  const tuners::QueryPlan plan =
      rung_based ? tuners::plan_hyperband(spec.hyperband) : tuners::plan_rs(spec.k);

  std::vector<TrialRecord> records;
  records.reserve(static_cast<std::size_t>(spec.trials));
  for (int t = 0; t < spec.trials; ++t) {
    const std::uint64_t trial_seed =
        rng::derive(spec.seed, {kTagTrial, gp.key_hash(), static_cast<std::uint64_t>(t)});

    std::unique_ptr<fed::Workload> workload;
    if (spec.workload.backend == BackendKind::fedtrain) {
      workload = std::make_unique<fed::FedWorkload>(ctx.variant(gp.iid_p, pop_seed),
                                                    rng::derive(trial_seed, {kTagTrain}));
    } else {
      workload = std::make_unique<fed::SurrogateWorkload>(*ctx.response, space);
    }
    const noise::EvalPolicy policy = gp.policy(workload->n_val());
    const int planned = tuners::planned_queries(plan, policy.privacy.mode);
    noise::NoisyEvaluator ev(*workload, policy, rng::derive(trial_seed, {kTagEval}), planned);

    tuners::TunerResult res;
    switch (spec.tuner) {
      case TunerKind::rs:
        res = tuners::rs_run(space, ev, spec.k, spec.rounds, trial_seed);
        break;
      case TunerKind::tpe:
        res = tuners::tpe_run(space, ev, spec.k, spec.rounds, spec.tpe, trial_seed);
        break;
      case TunerKind::hyperband:
        res = tuners::hyperband_run(space, ev, spec.hyperband, trial_seed);
        break;
      case TunerKind::bohb:
        res = tuners::bohb_run(space, ev, spec.hyperband, spec.tpe, trial_seed);
        break;
    }
    records.push_back(to_record(gp, t, trial_seed, res));
    traces.push_back(std::move(res.trace));
  }
  return records;
}

}  // namespace

RunOutput run(const ExperimentSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  const auto grid = expand_grid(spec.grid);
  const hp::SearchSpace space = make_space(spec.space);

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "records", ec);
  if (ec) throw IoError("cannot create output directory: " + (out_dir / "records").string());
  std::filesystem::create_directories(out_dir / "traces", ec);
  if (ec) throw IoError("cannot create output directory: " + (out_dir / "traces").string());

  RunOutput out;
  out.records_path = out_dir / "records.jsonl";
  out.summary_path = out_dir / "summary.csv";
  out.curves_path = out_dir / "curves.csv";
  out.grid_points = static_cast<int>(grid.size());

  // Which grid points still need computing? Pools are only built when at
  // least one bootstrap grid point is missing its files.
  std::map<double, Pool> pools;
  LiveContext ctx;
  bool prepared = false;
  auto prepare = [&] {
    if (prepared) return;
    prepared = true;
    if (spec.tuner == TunerKind::rs) {
      std::vector<double> iid_ps;
      for (const auto& gp : grid) iid_ps.push_back(gp.iid_p);
      pools = ensure_pools(spec, space, iid_ps, out_dir);
    } else if (spec.workload.backend == BackendKind::fedtrain) {
      ctx.base = std::make_shared<const fed::ClientPopulation>(fed::generate_population(
          spec.workload.population, rng::derive(spec.seed, {kTagPopulation})));
    } else {
      ctx.response = fed::make_surrogate(space, spec.workload.surrogate,
                                         rng::derive(spec.seed, {kTagSurrogate}));
    }
  };

  std::vector<TrialRecord> all_records;
  std::vector<CurvePoint> all_curves;
  for (const auto& gp : grid) {
    const std::string name = gp.file_stem() + ".jsonl";
    const auto rec_path = out_dir / "records" / name;
    const auto trace_path = out_dir / "traces" / name;

    std::vector<TrialRecord> records;
    std::vector<TrialTrace> traces;
    if (std::filesystem::exists(rec_path) && std::filesystem::exists(trace_path)) {
      records = io::read_records_jsonl(rec_path);
      traces = io::read_traces_jsonl(trace_path);
      out.trials_loaded += static_cast<int>(records.size());
    } else {
      prepare();
      if (spec.tuner == TunerKind::rs) {
        records = bootstrap_rs(pools.at(gp.iid_p), spec.k, spec.trials, gp, spec.seed, &traces);
      } else {
        records = live_trials(spec, space, gp, ctx, traces);
      }
      io::write_records_jsonl(records, rec_path);
      io::write_traces_jsonl(traces, trace_path);
      out.trials_run += static_cast<int>(records.size());
    }

    const auto budgets = observed_budgets(traces);
    auto curve = budget_curve(traces, budgets, gp);
    all_curves.insert(all_curves.end(), curve.begin(), curve.end());
    all_records.insert(all_records.end(), std::make_move_iterator(records.begin()),
                       std::make_move_iterator(records.end()));
  }

  io::write_records_jsonl(all_records, out.records_path);
  io::write_summary_csv(summarize_records(all_records), out.summary_path);
  io::write_curves_csv(all_curves, out.curves_path);
  return out;
}

// ---- proxy experiments ----

ProxyRunResult run_proxy(const ExperimentSpec& spec, const GridPoint& target_point) {
  spec.validate();
  const hp::SearchSpace space = make_space(spec.space);
  ProxyRunResult out;
  out.records.reserve(static_cast<std::size_t>(spec.trials));
  const std::uint64_t tp_hash = target_point.key_hash();

  auto record_trial = [&](int t, std::uint64_t trial_seed, const proxy::ProxyRsResult& r) {
    ProxyTrialRecord rec;
    rec.trial = t;
    rec.trial_seed = trial_seed;
    rec.chosen_config_id = r.search.best_id;
    rec.chosen_config = r.search.best_config;
    rec.proxy_score = r.search.best_score;
    rec.target_error = r.target_error;
    rec.epsilon_consumed = r.epsilon_consumed;
    out.records.push_back(std::move(rec));
  };

  if (spec.workload.backend == BackendKind::fedtrain) {
    const auto pair = proxy::make_population_pair(spec.workload.population, spec.proxy.knobs,
                                                  rng::derive(spec.seed, {kTagPopulation}));
    for (int t = 0; t < spec.trials; ++t) {
      const std::uint64_t trial_seed =
          rng::derive(spec.seed, {kTagTrial, tp_hash, static_cast<std::uint64_t>(t)});
      // Training seeds hang off each population's identity, so an identity
      // pair trains the winner identically on both sides.
      fed::FedWorkload proxy_w(pair.proxy,
                               rng::derive(trial_seed, {kTagTrain, pair.proxy->seed_tag}));
      fed::FedWorkload target_w(pair.target,
                                rng::derive(trial_seed, {kTagTrain, pair.target->seed_tag}));
      const auto r = proxy::oneshot_proxy_rs(proxy_w, target_w, space, spec.k, spec.rounds,
                                             trial_seed, target_point.policy(target_w.n_val()));
      record_trial(t, trial_seed, r);
    }
    out.scatter = proxy::transfer_scatter(*pair.target, *pair.proxy, space,
                                          spec.proxy.scatter_configs, spec.rounds,
                                          rng::derive(spec.seed, {kTagScatter}));
    return out;
  }

  // Surrogate pair: identity knobs share the response; any mismatch redraws
  // it from an independent seed (the knobs' population-level meanings do not
  // apply to a closed-form surface).
  const auto target_resp = fed::make_surrogate(space, spec.workload.surrogate,
                                               rng::derive(spec.seed, {kTagSurrogate}));
  const auto proxy_resp =
      spec.proxy.knobs.identity()
          ? target_resp
          : fed::make_surrogate(space, spec.workload.surrogate,
                                rng::derive(spec.seed, {kTagSurrogate, kTagProxy}));
  for (int t = 0; t < spec.trials; ++t) {
    const std::uint64_t trial_seed =
        rng::derive(spec.seed, {kTagTrial, tp_hash, static_cast<std::uint64_t>(t)});
    fed::SurrogateWorkload proxy_w(proxy_resp, space);
    fed::SurrogateWorkload target_w(target_resp, space);
    const auto r = proxy::oneshot_proxy_rs(proxy_w, target_w, space, spec.k, spec.rounds,
                                           trial_seed, target_point.policy(target_w.n_val()));
    record_trial(t, trial_seed, r);
  }
  fed::SurrogateWorkload scatter_target(target_resp, space);
  fed::SurrogateWorkload scatter_proxy(proxy_resp, space);
  out.scatter = proxy::transfer_scatter(scatter_target, scatter_proxy, space,
                                        spec.proxy.scatter_configs, spec.rounds,
                                        rng::derive(spec.seed, {kTagScatter}));
  return out;
}

}  // namespace fedtune::harness
