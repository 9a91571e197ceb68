#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedtune/hp_space.hpp"

// Closed-form stand-in for federated training: a per-client error function
// that is cheap, deterministic and shape-controllable (where the optimum sits,
// how errors fall with training rounds, which clients are outliers). Used to
// drive tuner and noise experiments without paying for real training, and to
// construct adversarial client landscapes the real trainer cannot exhibit on
// demand.
namespace fedtune::fed {

struct SurrogateResponse {
  // Bowl around `optimum` in transformed coordinates (log10 for log-scaled
  // dimensions): quality(config) = base + sum_d curvature[d]*(t_d - optimum[d])^2
  // over continuous dimensions, plus choice_penalty[d][value] over categorical
  // ones. Fixed dimensions contribute nothing.
  std::map<std::string, double> optimum;
  std::map<std::string, double> curvature;
  std::map<std::string, std::map<double, double>> choice_penalty;
  // Additive per-validation-client shift, applied before clamping to [0, 1].
  std::vector<double> client_offset;
  double base = 0.2;
  // Training-rounds response: error multiplier floor + (1-floor)*2^(-rounds/halflife),
  // so errors decay toward base*floor and never increase with rounds.
  double floor = 0.25;
  double halflife = 45.0;

  int n_val() const { return static_cast<int>(client_offset.size()); }
};

// Error of `config` on validation client `client` after `rounds` rounds:
// clamp01(quality(config) * fidelity(rounds) + client_offset[client]).
double surrogate_error(const SurrogateResponse& response, const hp::SearchSpace& space,
                       const hp::HpConfig& config, int client, int rounds);

struct SurrogateParams {
  int n_val = 100;
  double curvature_scale = 1.0;   // full-range deviation on one dim costs this much
  double choice_scale = 0.05;     // worst-case categorical penalty
  double offset_sigma = 0.02;     // Gaussian client offsets
  int n_outliers = 0;             // this many clients additionally get outlier_offset
  double outlier_offset = 0.0;
  double base = 0.2;
  double floor = 0.25;
  double halflife = 45.0;
};

// Draw a random response surface over `space`: the optimum is uniform over the
// transformed box, curvature is curvature_scale normalized by squared range,
// each categorical dimension gets penalties in [0, choice_scale] with the best
// choice at 0, and client offsets are N(0, offset_sigma) with the first
// n_outliers clients shifted by outlier_offset.
SurrogateResponse make_surrogate(const hp::SearchSpace& space, const SurrogateParams& params,
                                 std::uint64_t seed);

}  // namespace fedtune::fed
