#include "fedtune/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedtune/errors.hpp"
#include "fedtune/rng.hpp"

namespace fedtune::fed {

double surrogate_error(const SurrogateResponse& response, const hp::SearchSpace& space,
                       const hp::HpConfig& config, int client, int rounds) {
  if (client < 0 || client >= response.n_val()) {
    throw SpecError("surrogate_error: client index out of range");
  }
  if (rounds < 0) throw SpecError("surrogate_error: negative rounds");
  double quality = response.base;
  for (const auto& dim : space.dimensions()) {
    if (dim.is_continuous()) {
      const auto opt = response.optimum.find(dim.name);
      if (opt == response.optimum.end()) continue;
      const double curv = response.curvature.count(dim.name) ? response.curvature.at(dim.name) : 0.0;
      const double t = dim.transform(config.at(dim.name));
      quality += curv * (t - opt->second) * (t - opt->second);
    } else if (dim.kind == hp::DimKind::categorical) {
      const auto table = response.choice_penalty.find(dim.name);
      if (table == response.choice_penalty.end()) continue;
      const auto hit = table->second.find(config.at(dim.name));
      if (hit != table->second.end()) quality += hit->second;
    }
  }
  const double fidelity =
      response.floor + (1.0 - response.floor) *
                           std::exp2(-static_cast<double>(rounds) / response.halflife);
  const double raw = quality * fidelity + response.client_offset[static_cast<std::size_t>(client)];
  return std::clamp(raw, 0.0, 1.0);
}

SurrogateResponse make_surrogate(const hp::SearchSpace& space, const SurrogateParams& params,
                                 std::uint64_t seed) {
  if (params.n_val < 1) throw SpecError("make_surrogate: need at least one client");
  if (params.n_outliers < 0 || params.n_outliers > params.n_val) {
    throw SpecError("make_surrogate: outlier count out of range");
  }
  if (!(params.floor >= 0.0 && params.floor <= 1.0)) {
    throw SpecError("make_surrogate: floor must lie in [0, 1]");
  }
  if (!(params.halflife > 0.0)) throw SpecError("make_surrogate: halflife must be positive");
  rng::Stream stream(rng::derive(seed, {rng::tag("surrogate")}));
  SurrogateResponse resp;
  resp.base = params.base;
  resp.floor = params.floor;
  resp.halflife = params.halflife;
  for (const auto& dim : space.dimensions()) {
    if (dim.is_continuous()) {
      const double range = dim.upper_t() - dim.lower_t();
      resp.optimum[dim.name] = stream.uniform(dim.lower_t(), dim.upper_t());
      resp.curvature[dim.name] = params.curvature_scale / (range * range);
    } else if (dim.kind == hp::DimKind::categorical) {
      auto& table = resp.choice_penalty[dim.name];
      double lowest = std::numeric_limits<double>::infinity();
      for (double choice : dim.choices) {
        const double pen = stream.uniform(0.0, params.choice_scale);
        table[choice] = pen;
        lowest = std::min(lowest, pen);
      }
      for (auto& [choice, pen] : table) pen -= lowest;  // best choice costs 0
    }
  }
  resp.client_offset.resize(static_cast<std::size_t>(params.n_val));
  for (double& off : resp.client_offset) off = params.offset_sigma * stream.normal();
  for (int i = 0; i < params.n_outliers; ++i) {
    resp.client_offset[static_cast<std::size_t>(i)] += params.outlier_offset;
  }
  return resp;
}

}  // namespace fedtune::fed
