#include <doctest.h>

#include <cmath>
#include <vector>

#include "fedtune/errors.hpp"
#include "fedtune/fed_core.hpp"
#include "fedtune/hp_space.hpp"
#include "fedtune/noise.hpp"
#include "fedtune/proxy.hpp"
#include "fedtune/surrogate.hpp"
#include "fedtune/tuners.hpp"
#include "fedtune/workload.hpp"

using namespace fedtune;

namespace {

fed::PopulationParams small_params() {
  fed::PopulationParams p;
  p.n_train = 14;
  p.n_val = 8;
  p.classes = 3;
  p.dim = 4;
  p.samples_per_client = 30;
  p.alpha = 1.0;
  return p;
}

}  // namespace

TEST_CASE("identity knobs alias the target population") {
  const proxy::MismatchKnobs knobs;
  CHECK(knobs.identity());
  const auto pair = proxy::make_population_pair(small_params(), knobs, 201);
  CHECK(pair.target == pair.proxy);  // one shared object
  CHECK(pair.target->seed_tag == pair.proxy->seed_tag);
  CHECK(pair.target->n_val() == 8);
}

TEST_CASE("prototype rotation changes features but keeps the client layout") {
  proxy::MismatchKnobs knobs;
  knobs.prototype_angle_deg = 30.0;
  CHECK(!knobs.identity());
  const auto pair = proxy::make_population_pair(small_params(), knobs, 202);
  CHECK(pair.target != pair.proxy);
  // Same generation seed: the clients line up one-to-one...
  CHECK(pair.proxy->seed_tag == pair.target->seed_tag);
  REQUIRE(pair.proxy->train_clients.size() == pair.target->train_clients.size());
  for (std::size_t k = 0; k < pair.target->train_clients.size(); ++k) {
    CHECK(pair.proxy->train_clients[k].n() == pair.target->train_clients[k].n());
    CHECK(pair.proxy->train_clients[k].labels == pair.target->train_clients[k].labels);
  }
  // ...but the features moved.
  CHECK(pair.proxy->train_clients[0].features != pair.target->train_clients[0].features);
}

TEST_CASE("alpha, class and resample knobs produce genuinely different proxies") {
  proxy::MismatchKnobs alpha_knob;
  alpha_knob.alpha = 0.05;
  const auto by_alpha = proxy::make_population_pair(small_params(), alpha_knob, 203);
  CHECK(by_alpha.target != by_alpha.proxy);
  CHECK(by_alpha.proxy->classes == by_alpha.target->classes);

  proxy::MismatchKnobs class_knob;
  class_knob.classes = 5;
  const auto by_classes = proxy::make_population_pair(small_params(), class_knob, 204);
  CHECK(by_classes.target->classes == 3);
  CHECK(by_classes.proxy->classes == 5);

  proxy::MismatchKnobs resample_knob;
  resample_knob.resample = true;
  const auto redrawn = proxy::make_population_pair(small_params(), resample_knob, 205);
  CHECK(redrawn.target != redrawn.proxy);
  CHECK(redrawn.proxy->seed_tag != redrawn.target->seed_tag);
  CHECK(redrawn.proxy->train_clients[0].features != redrawn.target->train_clients[0].features);

  // Invalid overrides are rejected.
  proxy::MismatchKnobs bad;
  bad.alpha = 0.0;
  CHECK_THROWS_AS(proxy::make_population_pair(small_params(), bad, 206), SpecError);
  bad = proxy::MismatchKnobs{};
  bad.classes = 1;
  CHECK_THROWS_AS(proxy::make_population_pair(small_params(), bad, 206), SpecError);
}

TEST_CASE("identity proxy search equals direct noiseless search bitwise") {
  const auto space = hp::default_space();
  const auto resp = fed::make_surrogate(space, fed::SurrogateParams{}, 207);
  const int k = 6, rounds = 45;

  fed::SurrogateWorkload proxy_w(resp, space);
  fed::SurrogateWorkload target_w(resp, space);
  noise::EvalPolicy noisy_target;
  noisy_target.subsample = 5;
  noisy_target.privacy.mode = noise::PrivacyMode::per_eval;
  noisy_target.privacy.epsilon = 0.5;
  const auto via_proxy =
      proxy::oneshot_proxy_rs(proxy_w, target_w, space, k, rounds, 208, noisy_target);

  fed::SurrogateWorkload direct_w(resp, space);
  noise::NoisyEvaluator exact(direct_w, noise::EvalPolicy{}, 209);
  const auto direct = tuners::rs_run(space, exact, k, rounds, 208,
                                     tuners::BudgetLedger(k * rounds, rounds));

  // Same suggest seed, same (noiseless) scores: identical searches.
  REQUIRE(via_proxy.search.trace.size() == direct.trace.size());
  for (std::size_t i = 0; i < direct.trace.size(); ++i) {
    CHECK(via_proxy.search.trace[i].config == direct.trace[i].config);
    CHECK(via_proxy.search.trace[i].score == direct.trace[i].score);
  }
  CHECK(via_proxy.search.best_id == direct.best_id);
  // Identity proxy: deploying on the target reproduces the proxy error.
  CHECK(via_proxy.target_error == via_proxy.search.final_error);
  // The target's noise policy was never exercised.
  CHECK(via_proxy.epsilon_consumed == 0.0);
}

TEST_CASE("proxy search is invariant to the target evaluation policy") {
  const auto space = hp::default_space();
  const auto resp = fed::make_surrogate(space, fed::SurrogateParams{}, 210);
  const int k = 5, rounds = 45;

  noise::EvalPolicy mild;
  mild.subsample = 50;
  noise::EvalPolicy harsh;
  harsh.subsample = 1;
  harsh.bias_b = 3.0;
  harsh.privacy.mode = noise::PrivacyMode::per_eval;
  harsh.privacy.epsilon = 0.1;

  fed::SurrogateWorkload p1(resp, space), t1(resp, space);
  const auto a = proxy::oneshot_proxy_rs(p1, t1, space, k, rounds, 211, mild);
  fed::SurrogateWorkload p2(resp, space), t2(resp, space);
  const auto b = proxy::oneshot_proxy_rs(p2, t2, space, k, rounds, 211, harsh);

  CHECK(a.search.best_id == b.search.best_id);
  CHECK(a.target_error == b.target_error);
  REQUIRE(a.search.trace.size() == b.search.trace.size());
  for (std::size_t i = 0; i < a.search.trace.size(); ++i) {
    CHECK(a.search.trace[i].score == b.search.trace[i].score);
  }
  // A policy that cannot validate is still rejected.
  noise::EvalPolicy invalid;
  invalid.subsample = 0;
  fed::SurrogateWorkload p3(resp, space), t3(resp, space);
  CHECK_THROWS_AS(proxy::oneshot_proxy_rs(p3, t3, space, k, rounds, 211, invalid), SpecError);
}

TEST_CASE("proxy deployment on real populations trains the target once") {
  const auto space = hp::default_space();
  proxy::MismatchKnobs knobs;
  knobs.prototype_angle_deg = 20.0;
  const auto pair = proxy::make_population_pair(small_params(), knobs, 212);
  fed::FedWorkload proxy_w(pair.proxy, 213);
  fed::FedWorkload target_w(pair.target, 214);
  noise::EvalPolicy policy;
  const auto res = proxy::oneshot_proxy_rs(proxy_w, target_w, space, 4, 15, 215, policy);
  REQUIRE(res.search.trace.size() == 4);
  // The winner's exact target objective is what's reported.
  CHECK(res.target_error ==
        target_w.full_error(res.search.best_config, res.search.best_id, res.search.best_rounds));
  CHECK(res.target_error >= 0.0);
  CHECK(res.target_error <= 1.0);
  // Only the winner was trained on the target.
  CHECK(target_w.trained_rounds(res.search.best_id) == res.search.best_rounds);
}

TEST_CASE("transfer scatter of a population with itself is an exact diagonal") {
  const auto space = hp::default_space();
  const auto pop = fed::generate_population(small_params(), 216);
  const auto res = proxy::transfer_scatter(pop, pop, space, 6, 15, 217);
  REQUIRE(res.points.size() == 6);
  for (std::size_t i = 0; i < res.points.size(); ++i) {
    CHECK(res.points[i].config_id == i);
    CHECK(res.points[i].error_a == res.points[i].error_b);
  }
  CHECK(res.rho == doctest::Approx(1.0));
}

TEST_CASE("swapping scatter arguments transposes the points exactly") {
  const auto space = hp::default_space();
  proxy::MismatchKnobs knobs;
  knobs.resample = true;
  const auto pair = proxy::make_population_pair(small_params(), knobs, 218);
  const auto ab = proxy::transfer_scatter(*pair.target, *pair.proxy, space, 5, 15, 219);
  const auto ba = proxy::transfer_scatter(*pair.proxy, *pair.target, space, 5, 15, 219);
  REQUIRE(ab.points.size() == ba.points.size());
  for (std::size_t i = 0; i < ab.points.size(); ++i) {
    CHECK(ab.points[i].error_a == ba.points[i].error_b);
    CHECK(ab.points[i].error_b == ba.points[i].error_a);
  }
  CHECK(ab.rho == doctest::Approx(ba.rho));
}

TEST_CASE("matched surrogates correlate and independent ones do not") {
  const auto space = hp::default_space();
  fed::SurrogateParams sp;
  sp.offset_sigma = 0.0;
  const auto resp = fed::make_surrogate(space, sp, 220);

  // Identical response surfaces: perfect rank correlation.
  {
    fed::SurrogateWorkload a(resp, space), b(resp, space);
    const auto res = proxy::transfer_scatter(a, b, space, 20, 45, 221);
    CHECK(res.rho == doctest::Approx(1.0));
  }
  // Independently drawn optima: the ranking does not transfer.
  {
    const auto other = fed::make_surrogate(space, sp, 999);
    fed::SurrogateWorkload a(resp, space), b(other, space);
    const auto res = proxy::transfer_scatter(a, b, space, 20, 45, 221);
    CHECK(res.rho < 0.9);
  }
}
