// Command-line front end of the tuning simulator.
//
// Subcommands:
//   pool       build (or reuse) the cached config pools for a spec
//   tune       one live tuner run under a single noise policy, JSON to stdout
//   sweep      run the full policy grid x trials into an output directory
//   bootstrap  policy-grid sweep with the tuner pinned to random search
//   proxy      one-shot proxy tuning trials plus the transfer scatter
//   report     recompute summary.csv / curves.csv from saved records
//
// Exit codes: 0 success, 1 spec/usage error, 2 budget exhaustion, 3 I/O failure.

#include <cstdio>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedtune/errors.hpp"
#include "fedtune/harness.hpp"
#include "fedtune/json_io.hpp"
#include "fedtune/kernels.hpp"
#include "fedtune/stats.hpp"

namespace fs = std::filesystem;
using namespace fedtune;

namespace {

// Every spec field the CLI can set, with the CLI11 option handles needed to
// tell "explicitly set" apart from "left at default" (explicit flags override
// a --spec file).
struct SpecFlags {
  std::string spec_file;
  std::uint64_t seed = 1;
  int trials = 100;
  int k = 16;
  int rounds = 405;
  int pool_size = 128;
  std::string tuner = "rs";
  std::string backend = "fedtrain";
  int nested_width = 0;

  int n_train = 400;
  int n_val = 100;
  int classes = 10;
  int dim = 10;
  int samples = 100;
  int spread = 0;
  double alpha = 1.0;
  double feature_sigma = 1.0;
  bool weighted = false;

  double curvature_scale = 1.0;
  double choice_scale = 0.05;
  double offset_sigma = 0.02;
  int outliers = 0;
  double outlier_offset = 0.0;

  std::vector<int> subsample{0};
  std::vector<double> bias_b{0.0};
  std::vector<double> iid_p{0.0};
  std::vector<double> epsilon{0.0};
  std::string privacy_mode = "per_eval";
  double bias_delta = 1e-4;

  int max_resource = 405;
  int eta = 3;
  int s_max = 4;
  double gamma = 0.25;
  int candidates = 24;
  int n_min = 8;

  double proxy_angle = 0.0;
  std::optional<double> proxy_alpha;
  std::optional<int> proxy_classes;
  bool proxy_resample = false;
  int scatter_configs = 64;

  std::map<std::string, CLI::Option*> opts;

  bool set(const std::string& name) const {
    const auto it = opts.find(name);
    return it != opts.end() && it->second->count() > 0;
  }
};

void add_spec_flags(CLI::App* cmd, SpecFlags& f) {
  auto opt = [&](const std::string& name, auto& var, const std::string& desc) {
    f.opts[name] = cmd->add_option(name, var, desc);
  };
  opt("--spec", f.spec_file, "JSON experiment spec file (flags override its fields)");
  opt("--seed", f.seed, "master seed");
  opt("--trials", f.trials, "trials per grid point");
  opt("--k", f.k, "configs per RS/TPE trial");
  opt("--rounds", f.rounds, "full-fidelity training rounds per config");
  opt("--pool-size", f.pool_size, "configs trained into the pool");
  opt("--tuner", f.tuner, "tuner: rs, hyperband, tpe or bohb");
  opt("--backend", f.backend, "workload backend: fedtrain or surrogate");
  opt("--nested-width", f.nested_width, "0 = default space, 1..4 = nested server-lr space");

  opt("--n-train", f.n_train, "training clients");
  opt("--n-val", f.n_val, "validation clients");
  opt("--classes", f.classes, "label classes");
  opt("--dim", f.dim, "feature dimension");
  opt("--samples", f.samples, "samples per client");
  opt("--spread", f.spread, "uniform jitter on per-client sample counts");
  opt("--alpha", f.alpha, "Dirichlet concentration of client label mixes");
  opt("--feature-sigma", f.feature_sigma, "feature spread around class prototypes");
  f.opts["--weighted"] = cmd->add_flag("--weighted", f.weighted,
                                       "weight clients by sample count (default: uniform)");

  opt("--curvature-scale", f.curvature_scale, "surrogate: bowl steepness");
  opt("--choice-scale", f.choice_scale, "surrogate: worst categorical penalty");
  opt("--offset-sigma", f.offset_sigma, "surrogate: client offset spread");
  opt("--outliers", f.outliers, "surrogate: clients with an extra offset");
  opt("--outlier-offset", f.outlier_offset, "surrogate: the extra outlier offset");

  cmd->add_option("--subsample", f.subsample, "validation clients scored per eval (0 = all)")
      ->delimiter(',');
  f.opts["--subsample"] = cmd->get_option("--subsample");
  cmd->add_option("--bias-b", f.bias_b, "availability-bias exponents")->delimiter(',');
  f.opts["--bias-b"] = cmd->get_option("--bias-b");
  cmd->add_option("--iid-p", f.iid_p, "iid repartition fractions")->delimiter(',');
  f.opts["--iid-p"] = cmd->get_option("--iid-p");
  cmd->add_option("--epsilon", f.epsilon, "privacy budgets (0 = off)")->delimiter(',');
  f.opts["--epsilon"] = cmd->get_option("--epsilon");
  opt("--privacy-mode", f.privacy_mode, "per_eval or oneshot_topk");
  opt("--bias-delta", f.bias_delta, "availability-bias smoothing constant");

  opt("--max-resource", f.max_resource, "Hyperband R");
  opt("--eta", f.eta, "Hyperband elimination factor");
  opt("--s-max", f.s_max, "Hyperband bracket count minus one");
  opt("--gamma", f.gamma, "TPE good/bad split quantile");
  opt("--candidates", f.candidates, "TPE candidates per suggestion");
  opt("--n-min", f.n_min, "TPE observations before the model switches on");

  opt("--proxy-angle", f.proxy_angle, "proxy: prototype mixing angle (degrees)");
  opt("--proxy-alpha", f.proxy_alpha, "proxy: override Dirichlet concentration");
  opt("--proxy-classes", f.proxy_classes, "proxy: override class count");
  f.opts["--proxy-resample"] =
      cmd->add_flag("--proxy-resample", f.proxy_resample, "proxy: regenerate from a fresh seed");
  opt("--scatter-configs", f.scatter_configs, "proxy: configs in the transfer scatter");
}

harness::ExperimentSpec make_spec(const SpecFlags& f) {
  harness::ExperimentSpec spec;
  if (!f.spec_file.empty()) spec = io::load_spec(f.spec_file);

  if (f.set("--seed")) spec.seed = f.seed;
  if (f.set("--trials")) spec.trials = f.trials;
  if (f.set("--k")) spec.k = f.k;
  if (f.set("--rounds")) spec.rounds = f.rounds;
  if (f.set("--pool-size")) spec.pool_size = f.pool_size;
  if (f.set("--tuner")) spec.tuner = harness::parse_tuner(f.tuner);
  if (f.set("--backend")) spec.workload.backend = harness::parse_backend(f.backend);
  if (f.set("--nested-width")) spec.space.nested_width = f.nested_width;

  auto& pop = spec.workload.population;
  if (f.set("--n-train")) pop.n_train = f.n_train;
  if (f.set("--n-val")) pop.n_val = f.n_val;
  if (f.set("--classes")) pop.classes = f.classes;
  if (f.set("--dim")) pop.dim = f.dim;
  if (f.set("--samples")) pop.samples_per_client = f.samples;
  if (f.set("--spread")) pop.samples_spread = f.spread;
  if (f.set("--alpha")) pop.alpha = f.alpha;
  if (f.set("--feature-sigma")) pop.feature_sigma = f.feature_sigma;
  if (f.set("--weighted")) pop.mode = fed::WeightingMode::weighted;

  auto& sur = spec.workload.surrogate;
  if (f.set("--n-val")) sur.n_val = f.n_val;
  if (f.set("--curvature-scale")) sur.curvature_scale = f.curvature_scale;
  if (f.set("--choice-scale")) sur.choice_scale = f.choice_scale;
  if (f.set("--offset-sigma")) sur.offset_sigma = f.offset_sigma;
  if (f.set("--outliers")) sur.n_outliers = f.outliers;
  if (f.set("--outlier-offset")) sur.outlier_offset = f.outlier_offset;

  if (f.set("--subsample")) spec.grid.subsample = f.subsample;
  if (f.set("--bias-b")) spec.grid.bias_b = f.bias_b;
  if (f.set("--iid-p")) spec.grid.iid_p = f.iid_p;
  if (f.set("--epsilon")) spec.grid.epsilon = f.epsilon;
  if (f.set("--privacy-mode")) {
    if (f.privacy_mode == "per_eval") {
      spec.grid.privacy_mode = noise::PrivacyMode::per_eval;
    } else if (f.privacy_mode == "oneshot_topk") {
      spec.grid.privacy_mode = noise::PrivacyMode::oneshot_topk;
    } else {
      throw SpecError("unknown privacy mode: " + f.privacy_mode);
    }
  }
  if (f.set("--bias-delta")) spec.grid.bias_delta = f.bias_delta;

  if (f.set("--max-resource")) spec.hyperband.max_resource = f.max_resource;
  if (f.set("--eta")) spec.hyperband.eta = f.eta;
  if (f.set("--s-max")) spec.hyperband.s_max = f.s_max;
  if (f.set("--gamma")) spec.tpe.gamma = f.gamma;
  if (f.set("--candidates")) spec.tpe.n_candidates = f.candidates;
  if (f.set("--n-min")) spec.tpe.n_min = f.n_min;

  if (f.set("--proxy-angle")) spec.proxy.knobs.prototype_angle_deg = f.proxy_angle;
  if (f.set("--proxy-alpha")) spec.proxy.knobs.alpha = f.proxy_alpha;
  if (f.set("--proxy-classes")) spec.proxy.knobs.classes = f.proxy_classes;
  if (f.set("--proxy-resample")) spec.proxy.knobs.resample = f.proxy_resample;
  if (f.set("--scatter-configs")) spec.proxy.scatter_configs = f.scatter_configs;
  return spec;
}

// The single grid point subcommands like `tune` and `proxy` operate on.
harness::GridPoint single_point(const harness::ExperimentSpec& spec, const char* what) {
  const auto grid = harness::expand_grid(spec.grid);
  if (grid.size() != 1) {
    throw SpecError(std::string(what) + " runs a single noise policy; the grid has " +
                    std::to_string(grid.size()) + " points (use `sweep` for grids)");
  }
  return grid.front();
}

int cmd_pool(const SpecFlags& flags, const fs::path& out_dir) {
  const auto spec = make_spec(flags);
  spec.validate();
  const auto space = harness::make_space(spec.space);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory: " + out_dir.string());
  const auto pools = harness::ensure_pools(spec, space, spec.grid.iid_p, out_dir);
  for (const auto& [p, pool] : pools) {
    std::printf("pool iid_p=%s: %d configs x %zu checkpoints, %d validation clients -> %s\n",
                io::format_double(p).c_str(), pool.size(), pool.checkpoints.size(), pool.n_val(),
                harness::pool_path(spec, p, out_dir).string().c_str());
  }
  return 0;
}

int cmd_tune(const SpecFlags& flags) {
  const auto spec = make_spec(flags);
  spec.validate();
  const auto space = harness::make_space(spec.space);
  const auto gp = single_point(spec, "tune");
  const std::uint64_t trial_seed =
      rng::derive(spec.seed, {rng::tag("harness/trial"), gp.key_hash(), std::uint64_t{0}});

  std::unique_ptr<fed::Workload> workload;
  if (spec.workload.backend == harness::BackendKind::fedtrain) {
    auto population = std::make_shared<const fed::ClientPopulation>(fed::generate_population(
        spec.workload.population, rng::derive(spec.seed, {rng::tag("harness/population")})));
    if (gp.iid_p != 0.0) {
      population = std::make_shared<const fed::ClientPopulation>(noise::repartition_population(
          *population, gp.iid_p, rng::derive(spec.seed, {rng::tag("harness/population")})));
    }
    workload = std::make_unique<fed::FedWorkload>(
        population, rng::derive(trial_seed, {rng::tag("harness/train")}));
  } else {
    auto response = fed::make_surrogate(
        space, spec.workload.surrogate, rng::derive(spec.seed, {rng::tag("harness/surrogate")}));
    workload = std::make_unique<fed::SurrogateWorkload>(std::move(response), space);
  }

  const auto policy = gp.policy(workload->n_val());
  const bool rung_based = spec.tuner == harness::TunerKind::hyperband ||
                          spec.tuner == harness::TunerKind::bohb;
  const auto plan =
      rung_based ? tuners::plan_hyperband(spec.hyperband) : tuners::plan_rs(spec.k);
  noise::NoisyEvaluator ev(*workload, policy,
                           rng::derive(trial_seed, {rng::tag("harness/eval")}),
                           tuners::planned_queries(plan, policy.privacy.mode));

  tuners::TunerResult res;
  switch (spec.tuner) {
    case harness::TunerKind::rs:
      res = tuners::rs_run(space, ev, spec.k, spec.rounds, trial_seed);
      break;
    case harness::TunerKind::tpe:
      res = tuners::tpe_run(space, ev, spec.k, spec.rounds, spec.tpe, trial_seed);
      break;
    case harness::TunerKind::hyperband:
      res = tuners::hyperband_run(space, ev, spec.hyperband, trial_seed);
      break;
    case harness::TunerKind::bohb:
      res = tuners::bohb_run(space, ev, spec.hyperband, spec.tpe, trial_seed);
      break;
  }

  io::json out{{"tuner", harness::tuner_name(spec.tuner)},
               {"grid", io::grid_point_to_json(gp)},
               {"trial_seed", trial_seed},
               {"chosen_config_id", res.best_id},
               {"chosen_config", io::config_to_json(res.best_config)},
               {"chosen_rounds", res.best_rounds},
               {"chosen_score", res.best_score},
               {"final_error", res.final_error},
               {"rounds_consumed", res.rounds_consumed},
               {"epsilon_consumed", res.epsilon_consumed},
               {"evaluations", res.trace.size()}};
  if (!res.brackets.empty()) {
    io::json brackets = io::json::array();
    for (const auto& b : res.brackets) {
      io::json rungs = io::json::array();
      for (const auto& r : b.rungs) {
        rungs.push_back({{"resource", r.resource}, {"entrants", r.entrants.size()}});
      }
      brackets.push_back(
          {{"s", b.s}, {"r0", b.r0}, {"n0", b.n0}, {"truncated", b.truncated}, {"rungs", rungs}});
    }
    out["brackets"] = brackets;
  }
  std::printf("%s\n", out.dump(2).c_str());
  return 0;
}

int cmd_run_grid(const SpecFlags& flags, const fs::path& out_dir, bool force_rs) {
  auto spec = make_spec(flags);
  if (force_rs) {
    if (flags.set("--tuner") && spec.tuner != harness::TunerKind::rs) {
      throw SpecError("the bootstrap subcommand runs random search; use `sweep` for " +
                      std::string(harness::tuner_name(spec.tuner)));
    }
    spec.tuner = harness::TunerKind::rs;
  }
  const auto out = harness::run(spec, out_dir);
  std::printf("%d grid points, %d trials run, %d loaded\n", out.grid_points, out.trials_run,
              out.trials_loaded);
  std::printf("records: %s\nsummary: %s\ncurves:  %s\n", out.records_path.string().c_str(),
              out.summary_path.string().c_str(), out.curves_path.string().c_str());
  return 0;
}

int cmd_proxy(const SpecFlags& flags, const fs::path& out_dir) {
  const auto spec = make_spec(flags);
  const auto gp = single_point(spec, "proxy");
  const auto result = harness::run_proxy(spec, gp);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory: " + out_dir.string());

  std::string lines;
  std::vector<double> target_errors;
  for (const auto& rec : result.records) {
    lines += io::proxy_record_to_json(rec).dump();
    lines += '\n';
    target_errors.push_back(rec.target_error);
  }
  io::write_text_atomic(out_dir / "proxy_records.jsonl", lines);
  io::write_scatter_csv(result.scatter, out_dir / "scatter.csv");

  const auto summary = stats::summarize(target_errors);
  io::json meta{{"trials", result.records.size()},
                {"median_target_error", summary.median},
                {"q1_target_error", summary.q1},
                {"q3_target_error", summary.q3},
                {"scatter_rho", result.scatter.rho},
                {"scatter_configs", result.scatter.points.size()}};
  io::write_text_atomic(out_dir / "proxy_summary.json", meta.dump(2) + "\n");
  std::printf("%zu proxy trials, median target error %s, transfer rho %s -> %s\n",
              result.records.size(), io::format_double(summary.median).c_str(),
              io::format_double(result.scatter.rho).c_str(), out_dir.string().c_str());
  return 0;
}

int cmd_report(const fs::path& run_dir, const fs::path& out_dir) {
  const auto records = io::read_records_jsonl(run_dir / "records.jsonl");
  if (records.empty()) throw SpecError("no records in " + (run_dir / "records.jsonl").string());

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory: " + out_dir.string());

  const auto summary = harness::summarize_records(records);
  io::write_summary_csv(summary, out_dir / "summary.csv");

  // Rebuild curves from whatever per-grid trace files are present.
  std::vector<harness::CurvePoint> curves;
  std::vector<std::string> seen;
  for (const auto& rec : records) {
    const std::string key = rec.grid.key();
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
    seen.push_back(key);
    const auto trace_path = run_dir / "traces" / (rec.grid.file_stem() + ".jsonl");
    if (!fs::exists(trace_path)) continue;
    const auto traces = io::read_traces_jsonl(trace_path);
    auto curve = harness::budget_curve(traces, harness::observed_budgets(traces), rec.grid);
    curves.insert(curves.end(), curve.begin(), curve.end());
  }
  if (!curves.empty()) io::write_curves_csv(curves, out_dir / "curves.csv");

  std::printf("%zu records, %zu grid points -> %s\n", records.size(), summary.size(),
              out_dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"simulation framework for federated hyperparameter tuning under noisy evaluation"};
  app.require_subcommand(1);
  std::string kernels = "auto";
  app.add_option("--kernels", kernels, "vector backend: auto, scalar, avx2 or neon");

  SpecFlags pool_flags, tune_flags, sweep_flags, boot_flags, proxy_flags;
  fs::path pool_out, sweep_out, boot_out, proxy_out, report_dir, report_out;

  auto* pool = app.add_subcommand("pool", "build (or reuse) the cached config pools");
  add_spec_flags(pool, pool_flags);
  pool->add_option("--out", pool_out, "output directory")->required();

  auto* tune = app.add_subcommand("tune", "one live tuner run, JSON result to stdout");
  add_spec_flags(tune, tune_flags);

  auto* sweep = app.add_subcommand("sweep", "run the policy grid x trials");
  add_spec_flags(sweep, sweep_flags);
  sweep->add_option("--out", sweep_out, "output directory")->required();

  auto* boot = app.add_subcommand("bootstrap", "policy-grid sweep with random search");
  add_spec_flags(boot, boot_flags);
  boot->add_option("--out", boot_out, "output directory")->required();

  auto* proxy = app.add_subcommand("proxy", "one-shot proxy tuning plus transfer scatter");
  add_spec_flags(proxy, proxy_flags);
  proxy->add_option("--out", proxy_out, "output directory")->required();

  auto* report = app.add_subcommand("report", "recompute summary/curves from saved records");
  report->add_option("--dir", report_dir, "run directory holding records.jsonl")->required();
  report->add_option("--out", report_out, "output directory (default: the run directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    kernels::select_backend(kernels);
    if (pool->parsed()) return cmd_pool(pool_flags, pool_out);
    if (tune->parsed()) return cmd_tune(tune_flags);
    if (sweep->parsed()) return cmd_run_grid(sweep_flags, sweep_out, false);
    if (boot->parsed()) return cmd_run_grid(boot_flags, boot_out, true);
    if (proxy->parsed()) return cmd_proxy(proxy_flags, proxy_out);
    if (report->parsed()) {
      return cmd_report(report_dir, report_out.empty() ? report_dir : report_out);
    }
  } catch (const BudgetExhausted& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
