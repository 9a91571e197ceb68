#include "fedtune/workload.hpp"

#include "fedtune/errors.hpp"

namespace fedtune::fed {

double Workload::full_error(const hp::HpConfig& config, std::uint64_t uid, int rounds) {
  const auto errors = client_errors(config, uid, rounds);
  return aggregate_error(errors, val_weights());
}

FedWorkload::FedWorkload(std::shared_ptr<const ClientPopulation> population,
                         std::uint64_t train_seed)
    : population_(std::move(population)), train_seed_(train_seed) {
  if (!population_) throw SpecError("FedWorkload: null population");
  if (population_->n_val() == 0) throw SpecError("FedWorkload: population has no validation clients");
}

int FedWorkload::n_val() const { return population_->n_val(); }

std::span<const double> FedWorkload::val_weights() const { return population_->val_weights; }

WeightingMode FedWorkload::weighting() const { return population_->mode; }

std::vector<double> FedWorkload::client_errors(const hp::HpConfig& config, std::uint64_t uid,
                                               int rounds) {
  auto [it, fresh] = models_.try_emplace(uid);
  ModelState& model = it->second;
  if (fresh) model = ModelState::init(population_->dim, population_->classes);
  if (rounds < model.round_index) {
    throw SpecError("FedWorkload: fidelity must not decrease for a config");
  }
  train_more(model, config, *population_, rounds - model.round_index,
             TrainKey{train_seed_, uid});
  return per_client_errors(model, *population_);
}

int FedWorkload::trained_rounds(std::uint64_t uid) const {
  const auto it = models_.find(uid);
  return it == models_.end() ? 0 : it->second.round_index;
}

const ModelState& FedWorkload::model(std::uint64_t uid) const {
  const auto it = models_.find(uid);
  if (it == models_.end()) throw SpecError("FedWorkload: unknown config uid");
  return it->second;
}

SurrogateWorkload::SurrogateWorkload(SurrogateResponse response, hp::SearchSpace space)
    : response_(std::move(response)),
      space_(std::move(space)),
      weights_(static_cast<std::size_t>(response_.n_val()), 1.0) {
  if (response_.n_val() == 0) throw SpecError("SurrogateWorkload: response has no clients");
}

int SurrogateWorkload::n_val() const { return response_.n_val(); }

std::span<const double> SurrogateWorkload::val_weights() const { return weights_; }

std::vector<double> SurrogateWorkload::client_errors(const hp::HpConfig& config,
                                                     std::uint64_t uid, int rounds) {
  auto [it, fresh] = rounds_seen_.try_emplace(uid, 0);
  if (!fresh && rounds < it->second) {
    throw SpecError("SurrogateWorkload: fidelity must not decrease for a config");
  }
  it->second = rounds;
  std::vector<double> errors(static_cast<std::size_t>(response_.n_val()));
  for (int k = 0; k < response_.n_val(); ++k) {
    errors[static_cast<std::size_t>(k)] = surrogate_error(response_, space_, config, k, rounds);
  }
  return errors;
}

int SurrogateWorkload::trained_rounds(std::uint64_t uid) const {
  const auto it = rounds_seen_.find(uid);
  return it == rounds_seen_.end() ? 0 : it->second;
}

}  // namespace fedtune::fed
