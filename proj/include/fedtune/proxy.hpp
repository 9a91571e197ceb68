#pragma once

#include <cstdint>
#include <memory>
#include <optional>

#include "fedtune/noise.hpp"
#include "fedtune/tuners.hpp"
#include "fedtune/workload.hpp"

// Proxy-data tuning: run the search on a stand-in population that resembles
// the target, then deploy the chosen config on the target. The proxy search
// sees no target data, so it spends zero privacy budget and is — by
// construction — independent of whatever evaluation noise afflicts the target.
namespace fedtune::proxy {

// How the proxy population is allowed to differ from the target.
struct MismatchKnobs {
  // Mix class prototypes with a fresh Gaussian draw by this angle (degrees);
  // 0 keeps them identical, 90 makes them independent.
  double prototype_angle_deg = 0.0;
  std::optional<double> alpha;  // override the Dirichlet concentration
  std::optional<int> classes;   // override the class count (prototypes are redrawn)
  bool resample = false;        // regenerate clients from a fresh seed
  bool identity() const {
    return prototype_angle_deg == 0.0 && !alpha && !classes && !resample;
  }
};

struct PopulationPair {
  std::shared_ptr<const fed::ClientPopulation> target;
  std::shared_ptr<const fed::ClientPopulation> proxy;
};

// Generate a target population and a proxy with the requested mismatch.
// Identity knobs share one population object (the proxy IS the target), so
// downstream seed derivation via seed_tag coincides too.
PopulationPair make_population_pair(const fed::PopulationParams& params,
                                    const MismatchKnobs& knobs, std::uint64_t seed);

struct ProxyRsResult {
  tuners::TunerResult search;  // the noiseless RS that ran on the proxy
  double target_error = 0.0;   // exact target objective of the chosen config
  double epsilon_consumed = 0.0;  // always 0: no target queries during search
};

// Step 1: noiseless random search (k configs at `rounds`) entirely on the
// proxy. Step 2: train the winner on the target and report its exact target
// objective. `target_policy` is the evaluation-noise condition the target
// would impose on in-loop tuning; it is validated and then deliberately
// ignored — the whole point of proxy tuning is that the result is bitwise
// invariant to it.
ProxyRsResult oneshot_proxy_rs(fed::Workload& proxy_workload, fed::Workload& target_workload,
                               const hp::SearchSpace& space, int k, int rounds,
                               std::uint64_t seed, const noise::EvalPolicy& target_policy);

struct ScatterPoint {
  std::uint64_t config_id = 0;
  double error_a = 0.0;
  double error_b = 0.0;
};

struct ScatterResult {
  std::vector<ScatterPoint> points;
  double rho = 0.0;  // Spearman rank correlation of error_a vs error_b
};

// How well hyperparameter quality transfers between two populations: train the
// same `n_configs` sampled configs on each for `rounds` rounds and pair up the
// exact objectives. Per-population training seeds derive from (seed,
// population seed_tag), so swapping the arguments exactly transposes the
// scatter, and identical populations give an exact diagonal (rho = 1).
ScatterResult transfer_scatter(const fed::ClientPopulation& a, const fed::ClientPopulation& b,
                               const hp::SearchSpace& space, int n_configs, int rounds,
                               std::uint64_t seed);

// Same protocol over prebuilt workloads (e.g. surrogate pairs); training
// seeding is whatever the workloads were built with.
ScatterResult transfer_scatter(fed::Workload& a, fed::Workload& b, const hp::SearchSpace& space,
                               int n_configs, int rounds, std::uint64_t seed);

}  // namespace fedtune::proxy
