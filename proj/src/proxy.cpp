#include "fedtune/proxy.hpp"

#include "fedtune/errors.hpp"
#include "fedtune/stats.hpp"

namespace fedtune::proxy {
namespace {

constexpr std::uint64_t kTagPairTarget = rng::tag("proxy/pair/target");
constexpr std::uint64_t kTagPairProxy = rng::tag("proxy/pair/proxy");
constexpr std::uint64_t kTagProxyEval = rng::tag("proxy/eval");
constexpr std::uint64_t kTagScatterConfigs = rng::tag("proxy/scatter/configs");
constexpr std::uint64_t kTagScatterTrain = rng::tag("proxy/scatter/train");

}  // namespace

PopulationPair make_population_pair(const fed::PopulationParams& params,
                                    const MismatchKnobs& knobs, std::uint64_t seed) {
  const std::uint64_t target_seed = rng::derive(seed, {kTagPairTarget});
  auto target = std::make_shared<const fed::ClientPopulation>(
      fed::generate_population(params, target_seed));
  if (knobs.identity()) {
    return {target, target};
  }
  if (knobs.alpha && !(*knobs.alpha > 0.0)) {
    throw SpecError("population pair: proxy alpha must be positive");
  }
  if (knobs.classes && *knobs.classes < 2) {
    throw SpecError("population pair: proxy class count must be at least 2");
  }
  fed::PopulationParams proxy_params = params;
  if (knobs.alpha) proxy_params.alpha = *knobs.alpha;
  if (knobs.classes) proxy_params.classes = *knobs.classes;

  const std::uint64_t proxy_seed =
      knobs.resample ? rng::derive(seed, {kTagPairProxy}) : target_seed;
  std::vector<double> prototypes;
  if (knobs.classes && *knobs.classes != params.classes) {
    // different label set: prototypes cannot be carried over, draw fresh ones
    prototypes = fed::sample_prototypes(proxy_params.classes, proxy_params.dim,
                                        rng::derive(seed, {kTagPairProxy}));
  } else {
    const auto base = fed::sample_prototypes(params.classes, params.dim, target_seed);
    prototypes = fed::rotate_prototypes(base, knobs.prototype_angle_deg,
                                        rng::derive(seed, {kTagPairProxy}));
  }
  auto proxy = std::make_shared<const fed::ClientPopulation>(
      fed::generate_population(proxy_params, prototypes, proxy_seed));
  return {target, proxy};
}

ProxyRsResult oneshot_proxy_rs(fed::Workload& proxy_workload, fed::Workload& target_workload,
                               const hp::SearchSpace& space, int k, int rounds,
                               std::uint64_t seed, const noise::EvalPolicy& target_policy) {
  // The target's noise condition must at least be a valid one, but it plays no
  // further role: the search below never touches the target workload.
  target_policy.validate(target_workload.n_val());

  noise::NoisyEvaluator proxy_eval(proxy_workload, noise::EvalPolicy{},
                                   rng::derive(seed, {kTagProxyEval}));
  ProxyRsResult result;
  result.search = tuners::rs_run(space, proxy_eval, k, rounds, seed);
  result.target_error = target_workload.full_error(result.search.best_config,
                                                   result.search.best_id,
                                                   result.search.best_rounds);
  result.epsilon_consumed = 0.0;
  return result;
}

ScatterResult transfer_scatter(fed::Workload& a, fed::Workload& b, const hp::SearchSpace& space,
                               int n_configs, int rounds, std::uint64_t seed) {
  if (n_configs < 2) throw SpecError("transfer_scatter: need at least 2 configs");
  if (rounds < 0) throw SpecError("transfer_scatter: negative rounds");
  rng::Stream config_stream(rng::derive(seed, {kTagScatterConfigs}));
  ScatterResult result;
  std::vector<double> ea, eb;
  for (int i = 0; i < n_configs; ++i) {
    const hp::HpConfig config = sample_config(space, config_stream);
    const auto uid = static_cast<std::uint64_t>(i);
    ScatterPoint point;
    point.config_id = uid;
    point.error_a = a.full_error(config, uid, rounds);
    point.error_b = b.full_error(config, uid, rounds);
    ea.push_back(point.error_a);
    eb.push_back(point.error_b);
    result.points.push_back(point);
  }
  result.rho = stats::spearman_rho(ea, eb);
  return result;
}

ScatterResult transfer_scatter(const fed::ClientPopulation& a, const fed::ClientPopulation& b,
                               const hp::SearchSpace& space, int n_configs, int rounds,
                               std::uint64_t seed) {
  // Training seeds hang off the population's generation tag: swapping (a, b)
  // transposes the scatter exactly, identical populations train identically.
  auto hold_a = std::make_shared<const fed::ClientPopulation>(a);
  auto hold_b = std::make_shared<const fed::ClientPopulation>(b);
  fed::FedWorkload wa(hold_a, rng::derive(seed, {kTagScatterTrain, a.seed_tag}));
  fed::FedWorkload wb(hold_b, rng::derive(seed, {kTagScatterTrain, b.seed_tag}));
  return transfer_scatter(wa, wb, space, n_configs, rounds, seed);
}

}  // namespace fedtune::proxy
