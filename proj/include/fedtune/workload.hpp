#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "fedtune/fed_core.hpp"
#include "fedtune/surrogate.hpp"

// A workload answers "what are the per-validation-client errors of config X
// after R training rounds?". Tuners and the noise layer only see this
// interface, so real federated training, the closed-form surrogate and the
// harness's precomputed checkpoint pools are interchangeable.
namespace fedtune::fed {

class Workload {
 public:
  virtual ~Workload() = default;

  virtual int n_val() const = 0;
  virtual std::span<const double> val_weights() const = 0;
  virtual WeightingMode weighting() const = 0;

  // Per-validation-client errors of config `uid` at `rounds` cumulative
  // training rounds, advancing (and caching) training as needed. For a given
  // uid the requested fidelity must never decrease.
  virtual std::vector<double> client_errors(const hp::HpConfig& config, std::uint64_t uid,
                                            int rounds) = 0;

  // Cumulative rounds already trained for `uid` (0 if never seen).
  virtual int trained_rounds(std::uint64_t uid) const = 0;

  // Exact objective: weighted aggregate over all validation clients.
  double full_error(const hp::HpConfig& config, std::uint64_t uid, int rounds);
};

// Live federated training. Models are cached per config uid so increasing
// fidelities warm-start; per-round seeds derive from (train_seed, uid, round),
// making results independent of evaluation order.
class FedWorkload : public Workload {
 public:
  FedWorkload(std::shared_ptr<const ClientPopulation> population, std::uint64_t train_seed);

  int n_val() const override;
  std::span<const double> val_weights() const override;
  WeightingMode weighting() const override;
  std::vector<double> client_errors(const hp::HpConfig& config, std::uint64_t uid,
                                    int rounds) override;
  int trained_rounds(std::uint64_t uid) const override;

  const ClientPopulation& population() const { return *population_; }
  // The trained model behind a uid (throws if the uid was never evaluated).
  const ModelState& model(std::uint64_t uid) const;

 private:
  std::shared_ptr<const ClientPopulation> population_;
  std::uint64_t train_seed_;
  std::unordered_map<std::uint64_t, ModelState> models_;
};

// Closed-form response surface; "training" is free, weights are uniform.
class SurrogateWorkload : public Workload {
 public:
  SurrogateWorkload(SurrogateResponse response, hp::SearchSpace space);

  int n_val() const override;
  std::span<const double> val_weights() const override;
  WeightingMode weighting() const override { return WeightingMode::uniform; }
  std::vector<double> client_errors(const hp::HpConfig& config, std::uint64_t uid,
                                    int rounds) override;
  int trained_rounds(std::uint64_t uid) const override;

  const SurrogateResponse& response() const { return response_; }

 private:
  SurrogateResponse response_;
  hp::SearchSpace space_;
  std::vector<double> weights_;
  std::unordered_map<std::uint64_t, int> rounds_seen_;
};

}  // namespace fedtune::fed
