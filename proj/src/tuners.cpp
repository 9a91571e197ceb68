#include "fedtune/tuners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "fedtune/errors.hpp"
#include "fedtune/stats.hpp"

namespace fedtune::tuners {
namespace {

constexpr std::uint64_t kTagSuggest = rng::tag("tuner/suggest");

int ipow(int base, int exp) {
  int out = 1;
  for (int i = 0; i < exp; ++i) out *= base;
  return out;
}

// Charge the ledger, evaluate, and append the observation.
void observe(std::vector<Observation>& trace, noise::Evaluator& ev, BudgetLedger& ledger,
             const Entry& entry, int rounds) {
  ledger.train_to(entry.id, rounds);
  Observation obs;
  obs.config_id = entry.id;
  obs.config = entry.config;
  obs.rounds = rounds;
  obs.score = ev.evaluate(entry.config, entry.id, rounds);
  obs.budget_after = ledger.consumed();
  obs.true_error = ev.full_error(entry.config, entry.id, rounds);
  trace.push_back(std::move(obs));
}

void finalize(TunerResult& res, noise::Evaluator& ev, const BudgetLedger& ledger) {
  if (res.trace.empty()) {
    throw BudgetExhausted("tuner finished with no observations: budget too small for any rung");
  }
  const Selection sel = select_final(res.trace, ev);
  const Observation& winner = res.trace[sel.obs_index];
  res.best_id = sel.config_id;
  res.best_config = winner.config;
  res.best_rounds = sel.rounds;
  res.best_score = sel.score;
  res.final_error = winner.true_error;
  res.rounds_consumed = ledger.consumed();
  res.epsilon_consumed = ev.epsilon_consumed();
}

// One halving bracket over `alive`; appends observations, returns rung records.
std::vector<RungRecord> run_bracket(std::vector<Entry> alive, int r0, int eta, int cap,
                                    noise::Evaluator& ev, BudgetLedger& ledger,
                                    std::vector<Observation>& trace, bool& truncated) {
  if (alive.empty()) throw SpecError("halving bracket needs at least one config");
  if (eta < 2) throw SpecError("halving eta must be at least 2");
  if (r0 < 1 || r0 > cap) throw SpecError("halving r0 must lie in [1, cap]");
  std::vector<RungRecord> rungs;
  truncated = false;
  int r = r0;
  for (;;) {
    long long cost = 0;
    for (const Entry& e : alive) cost += r - ledger.config_rounds(e.id);
    if (cost > ledger.remaining()) {
      truncated = true;
      break;
    }
    RungRecord rung;
    rung.resource = r;
    std::vector<double> scores;
    scores.reserve(alive.size());
    for (const Entry& e : alive) {
      observe(trace, ev, ledger, e, r);
      rung.entrants.push_back(e.id);
      scores.push_back(trace.back().score);
    }
    const int keep = static_cast<int>(alive.size()) / eta;
    if (keep < 1 || r >= cap) {
      rungs.push_back(std::move(rung));
      break;
    }
    const std::vector<int> picked = ev.select_topk(scores, keep);
    std::vector<Entry> next;
    next.reserve(picked.size());
    for (int idx : picked) next.push_back(alive[static_cast<std::size_t>(idx)]);
    std::sort(next.begin(), next.end(),
              [](const Entry& a, const Entry& b) { return a.id < b.id; });
    for (const Entry& e : next) rung.survivors.push_back(e.id);
    rungs.push_back(std::move(rung));
    alive = std::move(next);
    r = std::min(r * eta, cap);
  }
  return rungs;
}

int hyperband_bracket_size(const HyperbandParams& p, int s) {
  // ceil((s_max + 1) * eta^s / (s + 1))
  const int num = (p.s_max + 1) * ipow(p.eta, s);
  return (num + s) / (s + 1);
}

void validate_hyperband(const HyperbandParams& p) {
  if (p.eta < 2) throw SpecError("hyperband eta must be at least 2");
  if (p.s_max < 0) throw SpecError("hyperband s_max must be nonnegative");
  if (p.max_resource < 1) throw SpecError("hyperband max_resource must be positive");
  if (p.max_resource % ipow(p.eta, p.s_max) != 0) {
    throw SpecError("hyperband max_resource must be divisible by eta^s_max");
  }
}

}  // namespace

BudgetLedger::BudgetLedger(int total_rounds, int per_config_cap)
    : total_(total_rounds), cap_(per_config_cap) {
  if (total_ < 1 || cap_ < 1) throw SpecError("budget ledger: budgets must be positive");
}

int BudgetLedger::config_rounds(std::uint64_t uid) const {
  const auto it = per_config_.find(uid);
  return it == per_config_.end() ? 0 : it->second;
}

bool BudgetLedger::can_train_to(std::uint64_t uid, int cumulative_rounds) const {
  const int have = config_rounds(uid);
  if (cumulative_rounds < have) return false;
  if (cumulative_rounds > cap_) return false;
  return cumulative_rounds - have <= remaining();
}

void BudgetLedger::train_to(std::uint64_t uid, int cumulative_rounds) {
  const int have = config_rounds(uid);
  if (cumulative_rounds < have) {
    throw SpecError("budget ledger: cumulative rounds may not decrease");
  }
  if (cumulative_rounds > cap_) {
    throw BudgetExhausted("budget ledger: per-config round cap exceeded");
  }
  const int increment = cumulative_rounds - have;
  if (increment > remaining()) {
    throw BudgetExhausted("budget ledger: total round budget exceeded");
  }
  consumed_ += increment;
  per_config_[uid] = cumulative_rounds;
}

std::vector<RungPlan> plan_bracket(int n0, int r0, int eta, int cap) {
  if (n0 < 1) throw SpecError("plan_bracket: need at least one config");
  if (eta < 2) throw SpecError("plan_bracket: eta must be at least 2");
  if (r0 < 1 || r0 > cap) throw SpecError("plan_bracket: r0 must lie in [1, cap]");
  std::vector<RungPlan> out;
  int n = n0;
  int r = r0;
  for (;;) {
    out.push_back({r, n});
    const int keep = n / eta;
    if (keep < 1 || r >= cap) break;
    n = keep;
    r = std::min(r * eta, cap);
  }
  return out;
}

QueryPlan plan_rs(int k) {
  if (k < 1) throw SpecError("plan_rs: need at least one config");
  return {k, 0};
}

QueryPlan plan_sha(int n0, int r0, int eta, int cap) {
  const auto rungs = plan_bracket(n0, r0, eta, cap);
  QueryPlan plan;
  for (const auto& rung : rungs) plan.evaluations += rung.n;
  plan.eliminations = static_cast<int>(rungs.size()) - 1;
  return plan;
}

QueryPlan plan_hyperband(const HyperbandParams& params) {
  validate_hyperband(params);
  QueryPlan plan;
  for (int s = params.s_max; s >= 0; --s) {
    const auto sub = plan_sha(hyperband_bracket_size(params, s),
                              params.max_resource / ipow(params.eta, s), params.eta,
                              params.max_resource);
    plan.evaluations += sub.evaluations;
    plan.eliminations += sub.eliminations;
  }
  return plan;
}

int planned_queries(const QueryPlan& plan, noise::PrivacyMode mode) {
  switch (mode) {
    case noise::PrivacyMode::off:
      return 0;
    case noise::PrivacyMode::per_eval:
      return plan.evaluations;
    case noise::PrivacyMode::oneshot_topk:
      return plan.eliminations + 1;  // +1 for the final selection
  }
  return 0;
}

TunerResult rs_run(const hp::SearchSpace& space, noise::Evaluator& ev, int k, int rounds,
                   std::uint64_t seed, BudgetLedger ledger) {
  if (k < 1) throw SpecError("rs_run: need at least one config");
  rng::Stream suggest(rng::derive(seed, {kTagSuggest}));
  TunerResult res;
  for (int i = 0; i < k; ++i) {
    const Entry entry{static_cast<std::uint64_t>(i), sample_config(space, suggest)};
    observe(res.trace, ev, ledger, entry, rounds);
  }
  finalize(res, ev, ledger);
  return res;
}

TunerResult rs_run_fixed(std::span<const Entry> entries, noise::Evaluator& ev, int rounds,
                         BudgetLedger ledger) {
  if (entries.empty()) throw SpecError("rs_run_fixed: need at least one config");
  TunerResult res;
  for (const Entry& entry : entries) observe(res.trace, ev, ledger, entry, rounds);
  finalize(res, ev, ledger);
  return res;
}

TunerResult sha_run(std::span<const Entry> entries, int eta, int r0, int cap,
                    noise::Evaluator& ev, BudgetLedger ledger) {
  TunerResult res;
  BracketRecord bracket;
  bracket.s = 0;
  bracket.r0 = r0;
  bracket.n0 = static_cast<int>(entries.size());
  bracket.rungs = run_bracket(std::vector<Entry>(entries.begin(), entries.end()), r0, eta, cap,
                              ev, ledger, res.trace, bracket.truncated);
  res.brackets.push_back(std::move(bracket));
  finalize(res, ev, ledger);
  return res;
}

TunerResult hyperband_run(const hp::SearchSpace& space, noise::Evaluator& ev,
                          const HyperbandParams& params, std::uint64_t seed,
                          BudgetLedger ledger) {
  validate_hyperband(params);
  rng::Stream suggest(rng::derive(seed, {kTagSuggest}));
  TunerResult res;
  std::uint64_t next_id = 0;
  for (int s = params.s_max; s >= 0; --s) {
    const int n = hyperband_bracket_size(params, s);
    const int r0 = params.max_resource / ipow(params.eta, s);
    std::vector<Entry> entries;
    entries.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) entries.push_back({next_id++, sample_config(space, suggest)});
    BracketRecord bracket;
    bracket.s = s;
    bracket.r0 = r0;
    bracket.n0 = n;
    bracket.rungs = run_bracket(std::move(entries), r0, params.eta, params.max_resource, ev,
                                ledger, res.trace, bracket.truncated);
    res.brackets.push_back(std::move(bracket));
  }
  finalize(res, ev, ledger);
  return res;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> tpe_split(
    std::span<const double> scores, double gamma) {
  if (scores.empty()) throw SpecError("tpe_split: no observations");
  if (!(gamma > 0.0 && gamma < 1.0)) throw SpecError("tpe_split: gamma must lie in (0, 1)");
  const double cut = stats::quantile(scores, gamma);
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    (scores[i] < cut ? out.first : out.second).push_back(i);
  }
  return out;
}

TpeModel::TpeModel(const hp::SearchSpace& space, std::span<const hp::HpConfig> configs,
                   std::span<const double> scores, const TpeParams& params)
    : params_(params) {
  if (configs.size() != scores.size()) throw SpecError("TpeModel: config/score count mismatch");
  if (static_cast<int>(configs.size()) < params.n_min) return;  // not usable
  auto [good, bad] = tpe_split(scores, params.gamma);
  if (good.empty() || bad.empty()) return;  // degenerate split, not usable

  const auto kde_bandwidth = [&](const std::vector<double>& centers, double range) {
    const double n = static_cast<double>(centers.size());
    const double sd = std::sqrt(stats::variance(centers) * (n - 1.0) / std::max(n, 1.0));
    return std::max(sd * std::pow(n, -0.2), params_.bandwidth_floor * range);
  };

  for (const auto& dim : space.dimensions()) {
    if (dim.is_continuous()) {
      ContinuousDim cd;
      cd.name = dim.name;
      cd.log_scale = dim.kind == hp::DimKind::log_uniform;
      cd.lo = dim.lower_t();
      cd.hi = dim.upper_t();
      for (std::size_t i : good) cd.good_centers.push_back(dim.transform(configs[i].at(dim.name)));
      for (std::size_t i : bad) cd.bad_centers.push_back(dim.transform(configs[i].at(dim.name)));
      const double range = cd.hi - cd.lo;
      cd.good_bw = kde_bandwidth(cd.good_centers, range);
      cd.bad_bw = kde_bandwidth(cd.bad_centers, range);
      continuous_.push_back(std::move(cd));
    } else if (dim.kind == hp::DimKind::categorical) {
      CategoricalDim cd;
      cd.name = dim.name;
      cd.choices = dim.choices;
      const auto smoothed = [&](const std::vector<std::size_t>& group) {
        std::vector<double> prob(dim.choices.size(), 0.0);
        for (std::size_t i : group) {
          const double v = configs[i].at(dim.name);
          for (std::size_t c = 0; c < dim.choices.size(); ++c) {
            if (dim.choices[c] == v) {
              prob[c] += 1.0;
              break;
            }
          }
        }
        const double denom = static_cast<double>(group.size() + dim.choices.size());
        for (double& p : prob) p = (p + 1.0) / denom;
        return prob;
      };
      cd.good_prob = smoothed(good);
      cd.bad_prob = smoothed(bad);
      categorical_.push_back(std::move(cd));
    } else {
      fixed_.push_back({dim.name, dim.value});
    }
  }
  usable_ = true;
}

namespace {

double kde_pdf(double x, const std::vector<double>& centers, double bw) {
  constexpr double inv_sqrt_2pi = 0.3989422804014326779399461;
  double acc = 0.0;
  for (double c : centers) {
    const double z = (x - c) / bw;
    acc += std::exp(-0.5 * z * z);
  }
  return acc * inv_sqrt_2pi / (bw * static_cast<double>(centers.size()));
}

}  // namespace

hp::HpConfig TpeModel::sample(rng::Stream& stream) const {
  if (!usable_) throw SpecError("TpeModel: sampling from an unusable model");
  hp::HpConfig config;
  for (const auto& cd : continuous_) {
    const double center = cd.good_centers[stream.index(cd.good_centers.size())];
    double x = center + cd.good_bw * stream.normal();
    for (int tries = 0; (x < cd.lo || x > cd.hi) && tries < 100; ++tries) {
      x = cd.good_centers[stream.index(cd.good_centers.size())] + cd.good_bw * stream.normal();
    }
    x = std::clamp(x, cd.lo, cd.hi);
    config.set(cd.name, cd.log_scale ? std::pow(10.0, x) : x);
  }
  for (const auto& cd : categorical_) {
    const double u = stream.uniform();
    double cum = 0.0;
    std::size_t pick = cd.choices.size() - 1;
    for (std::size_t c = 0; c < cd.choices.size(); ++c) {
      cum += cd.good_prob[c];
      if (u < cum) {
        pick = c;
        break;
      }
    }
    config.set(cd.name, cd.choices[pick]);
  }
  for (const auto& fd : fixed_) config.set(fd.name, fd.value);
  return config;
}

double TpeModel::density(const hp::HpConfig& config, bool good) const {
  double dens = 1.0;
  for (const auto& cd : continuous_) {
    const double x = cd.log_scale ? std::log10(config.at(cd.name)) : config.at(cd.name);
    dens *= kde_pdf(x, good ? cd.good_centers : cd.bad_centers, good ? cd.good_bw : cd.bad_bw);
  }
  for (const auto& cd : categorical_) {
    const double v = config.at(cd.name);
    for (std::size_t c = 0; c < cd.choices.size(); ++c) {
      if (cd.choices[c] == v) {
        dens *= (good ? cd.good_prob : cd.bad_prob)[c];
        break;
      }
    }
  }
  return dens;
}

double TpeModel::good_density(const hp::HpConfig& config) const { return density(config, true); }

double TpeModel::bad_density(const hp::HpConfig& config) const { return density(config, false); }

hp::HpConfig TpeModel::suggest(rng::Stream& stream) const {
  if (!usable_) throw SpecError("TpeModel: suggesting from an unusable model");
  hp::HpConfig best;
  double best_ratio = std::numeric_limits<double>::infinity();
  for (int i = 0; i < params_.n_candidates; ++i) {
    hp::HpConfig cand = sample(stream);
    const double g = good_density(cand);
    const double b = bad_density(cand);
    // minimize bad/good; a vanishing good density can only happen numerically
    // far in the tails, where the candidate is not worth keeping anyway
    const double ratio = g > 0.0 ? b / g : std::numeric_limits<double>::infinity();
    if (ratio < best_ratio) {
      best_ratio = ratio;
      best = std::move(cand);
    }
  }
  if (std::isinf(best_ratio)) return sample(stream);  // all-degenerate fallback
  return best;
}

hp::HpConfig tpe_suggest(const hp::SearchSpace& space, std::span<const hp::HpConfig> configs,
                         std::span<const double> scores, const TpeParams& params,
                         rng::Stream& stream) {
  if (!configs.empty()) {
    const TpeModel model(space, configs, scores, params);
    if (model.usable()) return model.suggest(stream);
  }
  return sample_config(space, stream);
}

TunerResult tpe_run(const hp::SearchSpace& space, noise::Evaluator& ev, int k, int rounds,
                    const TpeParams& tpe, std::uint64_t seed, BudgetLedger ledger) {
  if (k < 1) throw SpecError("tpe_run: need at least one config");
  rng::Stream suggest(rng::derive(seed, {kTagSuggest}));
  TunerResult res;
  std::vector<hp::HpConfig> configs;
  std::vector<double> scores;
  for (int i = 0; i < k; ++i) {
    const Entry entry{static_cast<std::uint64_t>(i),
                      tpe_suggest(space, configs, scores, tpe, suggest)};
    observe(res.trace, ev, ledger, entry, rounds);
    configs.push_back(res.trace.back().config);
    scores.push_back(res.trace.back().score);
  }
  finalize(res, ev, ledger);
  return res;
}

TunerResult bohb_run(const hp::SearchSpace& space, noise::Evaluator& ev,
                     const HyperbandParams& params, const TpeParams& tpe, std::uint64_t seed,
                     BudgetLedger ledger) {
  validate_hyperband(params);
  rng::Stream suggest(rng::derive(seed, {kTagSuggest}));
  TunerResult res;
  std::uint64_t next_id = 0;
  for (int s = params.s_max; s >= 0; --s) {
    const int n = hyperband_bracket_size(params, s);
    const int r0 = params.max_resource / ipow(params.eta, s);

    // Fit a model on the highest-fidelity rung with enough observations.
    int fit_fidelity = -1;
    std::map<int, std::vector<std::size_t>> by_rounds;
    for (std::size_t i = 0; i < res.trace.size(); ++i) {
      by_rounds[res.trace[i].rounds].push_back(i);
    }
    std::vector<hp::HpConfig> fit_configs;
    std::vector<double> fit_scores;
    for (auto it = by_rounds.rbegin(); it != by_rounds.rend(); ++it) {
      if (static_cast<int>(it->second.size()) >= tpe.n_min) {
        fit_fidelity = it->first;
        for (std::size_t i : it->second) {
          fit_configs.push_back(res.trace[i].config);
          fit_scores.push_back(res.trace[i].score);
        }
        break;
      }
    }
    const TpeModel model =
        fit_fidelity >= 0
            ? TpeModel(space, fit_configs, fit_scores, tpe)
            : TpeModel(space, {}, {}, TpeParams{tpe.gamma, tpe.n_candidates,
                                                std::numeric_limits<int>::max(),
                                                tpe.bandwidth_floor});
    if (!model.usable()) fit_fidelity = -1;

    std::vector<Entry> entries;
    entries.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      hp::HpConfig config =
          model.usable() ? model.suggest(suggest) : sample_config(space, suggest);
      entries.push_back({next_id++, std::move(config)});
      res.model_fidelity.push_back(fit_fidelity);
    }
    BracketRecord bracket;
    bracket.s = s;
    bracket.r0 = r0;
    bracket.n0 = n;
    bracket.rungs = run_bracket(std::move(entries), r0, params.eta, params.max_resource, ev,
                                ledger, res.trace, bracket.truncated);
    res.brackets.push_back(std::move(bracket));
  }
  finalize(res, ev, ledger);
  return res;
}

Selection select_final(std::span<const Observation> trace, noise::Evaluator& ev) {
  if (trace.empty()) throw SpecError("select_final: no observations");
  // Score-independent feeding order: ties in select_topk's stable exact path
  // then resolve to the earliest config id (and lower fidelity within one).
  std::vector<std::size_t> order(trace.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (trace[a].config_id != trace[b].config_id) return trace[a].config_id < trace[b].config_id;
    return trace[a].rounds < trace[b].rounds;
  });
  std::vector<double> scores(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) scores[i] = trace[order[i]].score;
  const int pick = ev.select_topk(scores, 1).at(0);
  const Observation& obs = trace[order[static_cast<std::size_t>(pick)]];
  return {order[static_cast<std::size_t>(pick)], obs.config_id, obs.rounds, obs.score};
}

}  // namespace fedtune::tuners
