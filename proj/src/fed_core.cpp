#include "fedtune/fed_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedtune/errors.hpp"
#include "fedtune/kernels.hpp"

namespace fedtune::fed {
namespace {

constexpr std::uint64_t kTagPrototypes = rng::tag("population/prototypes");
constexpr std::uint64_t kTagClient = rng::tag("population/client");
constexpr std::uint64_t kTagRotate = rng::tag("population/rotate");
constexpr std::uint64_t kTagRound = rng::tag("train/round");

void validate_population_params(const PopulationParams& p) {
  if (p.n_train < 1 || p.n_val < 1) throw SpecError("population needs at least one client per split");
  if (p.classes < 2) throw SpecError("population needs at least 2 classes");
  if (p.dim < 1) throw SpecError("population feature dimension must be positive");
  if (p.samples_per_client < 1) throw SpecError("samples_per_client must be positive");
  if (p.samples_spread < 0 || p.samples_spread >= p.samples_per_client) {
    throw SpecError("samples_spread must lie in [0, samples_per_client)");
  }
  if (!(p.alpha > 0.0)) throw SpecError("Dirichlet alpha must be positive");
  if (!(p.feature_sigma >= 0.0)) throw SpecError("feature_sigma must be nonnegative");
}

ClientDataset make_client(const PopulationParams& p, std::span<const double> prototypes,
                          rng::Stream& stream) {
  ClientDataset shard;
  shard.dim = p.dim;
  const std::vector<double> mix = stream.dirichlet(p.alpha, p.classes);
  int n = p.samples_per_client;
  if (p.samples_spread > 0) {
    n += static_cast<int>(stream.uniform_int(-p.samples_spread, p.samples_spread));
  }
  shard.labels.reserve(static_cast<std::size_t>(n));
  shard.features.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(p.dim));
  for (int i = 0; i < n; ++i) {
    // categorical draw by CDF inversion
    const double u = stream.uniform();
    int label = p.classes - 1;
    double cum = 0.0;
    for (int c = 0; c < p.classes; ++c) {
      cum += mix[static_cast<std::size_t>(c)];
      if (u < cum) {
        label = c;
        break;
      }
    }
    shard.labels.push_back(label);
    const double* proto = prototypes.data() + static_cast<std::size_t>(label) * p.dim;
    for (int j = 0; j < p.dim; ++j) {
      shard.features.push_back(proto[j] + p.feature_sigma * stream.normal());
    }
  }
  return shard;
}

// logits[c] = W_c . x + b_c
void compute_logits(std::span<const double> params, std::span<const double> x, int classes,
                    int dim, double* out) {
  const std::size_t d = static_cast<std::size_t>(dim);
  const double* bias = params.data() + static_cast<std::size_t>(classes) * d;
  for (int c = 0; c < classes; ++c) {
    out[c] = kernels::dot(params.data() + static_cast<std::size_t>(c) * d, x.data(), d) + bias[c];
  }
}

// Softmax probabilities in place of logits (max-subtracted for stability).
void softmax_inplace(double* z, int classes) {
  double zmax = z[0];
  for (int c = 1; c < classes; ++c) zmax = std::max(zmax, z[c]);
  double total = 0.0;
  for (int c = 0; c < classes; ++c) {
    z[c] = std::exp(z[c] - zmax);
    total += z[c];
  }
  for (int c = 0; c < classes; ++c) z[c] /= total;
}

// Gradient of mean cross-entropy over the given sample indices, plus L2 term,
// evaluated at `params`. `grad` must be zero-initialized with params' size.
void batch_grad(std::span<const double> params, const ClientDataset& data, int classes,
                double weight_decay, std::span<const int> batch, std::vector<double>& grad,
                std::vector<double>& logits_buf) {
  const std::size_t d = static_cast<std::size_t>(data.dim);
  double* gbias = grad.data() + static_cast<std::size_t>(classes) * d;
  for (int idx : batch) {
    const auto x = data.row(idx);
    compute_logits(params, x, classes, data.dim, logits_buf.data());
    softmax_inplace(logits_buf.data(), classes);
    const int y = data.labels[static_cast<std::size_t>(idx)];
    for (int c = 0; c < classes; ++c) {
      const double coeff = logits_buf[static_cast<std::size_t>(c)] - (c == y ? 1.0 : 0.0);
      kernels::axpy(coeff, x.data(), grad.data() + static_cast<std::size_t>(c) * d, d);
      gbias[c] += coeff;
    }
  }
  kernels::scale(grad.data(), 1.0 / static_cast<double>(batch.size()), grad.size());
  if (weight_decay != 0.0) {
    kernels::axpy(weight_decay, params.data(), grad.data(), grad.size());
  }
}

}  // namespace

std::vector<double> sample_prototypes(int classes, int dim, std::uint64_t seed) {
  rng::Stream stream(rng::derive(seed, {kTagPrototypes}));
  std::vector<double> proto(static_cast<std::size_t>(classes) * static_cast<std::size_t>(dim));
  for (double& v : proto) v = stream.normal();
  return proto;
}

std::vector<double> rotate_prototypes(std::span<const double> prototypes, double angle_deg,
                                      std::uint64_t seed) {
  if (angle_deg == 0.0) return {prototypes.begin(), prototypes.end()};
  const double a = angle_deg * (3.14159265358979323846 / 180.0);
  rng::Stream stream(rng::derive(seed, {kTagRotate}));
  std::vector<double> out(prototypes.size());
  const double c = std::cos(a);
  const double s = std::sin(a);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = c * prototypes[i] + s * stream.normal();
  }
  return out;
}

ClientPopulation generate_population(const PopulationParams& params, std::uint64_t seed) {
  const auto proto = sample_prototypes(params.classes, params.dim, seed);
  return generate_population(params, proto, seed);
}

ClientPopulation generate_population(const PopulationParams& params,
                                     std::span<const double> prototypes, std::uint64_t seed) {
  validate_population_params(params);
  if (prototypes.size() != static_cast<std::size_t>(params.classes) *
                               static_cast<std::size_t>(params.dim)) {
    throw SpecError("prototype matrix shape does not match population parameters");
  }
  ClientPopulation pop;
  pop.mode = params.mode;
  pop.classes = params.classes;
  pop.dim = params.dim;
  pop.seed_tag = seed;
  for (int split = 0; split < 2; ++split) {
    const int count = split == 0 ? params.n_train : params.n_val;
    auto& clients = split == 0 ? pop.train_clients : pop.val_clients;
    auto& weights = split == 0 ? pop.train_weights : pop.val_weights;
    clients.reserve(static_cast<std::size_t>(count));
    weights.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
      rng::Stream stream(rng::derive(seed, {kTagClient, static_cast<std::uint64_t>(split),
                                            static_cast<std::uint64_t>(k)}));
      clients.push_back(make_client(params, prototypes, stream));
      weights.push_back(params.mode == WeightingMode::weighted
                            ? static_cast<double>(clients.back().n())
                            : 1.0);
    }
  }
  return pop;
}

ModelState ModelState::init(int dim, int classes) {
  if (dim < 1 || classes < 2) throw SpecError("model needs dim >= 1 and classes >= 2");
  ModelState m;
  m.dim = dim;
  m.classes = classes;
  const std::size_t n =
      static_cast<std::size_t>(dim) * static_cast<std::size_t>(classes) + static_cast<std::size_t>(classes);
  m.params.assign(n, 0.0);
  m.opt_m.assign(n, 0.0);
  m.opt_v.assign(n, 0.0);
  return m;
}

double dataset_loss(std::span<const double> params, const ClientDataset& data, int classes,
                    double weight_decay) {
  if (data.n() == 0) throw SpecError("loss of empty shard");
  std::vector<double> z(static_cast<std::size_t>(classes));
  double total = 0.0;
  for (int i = 0; i < data.n(); ++i) {
    compute_logits(params, data.row(i), classes, data.dim, z.data());
    double zmax = z[0];
    for (int c = 1; c < classes; ++c) zmax = std::max(zmax, z[static_cast<std::size_t>(c)]);
    double lse = 0.0;
    for (int c = 0; c < classes; ++c) lse += std::exp(z[static_cast<std::size_t>(c)] - zmax);
    lse = zmax + std::log(lse);
    total += lse - z[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])];
  }
  double loss = total / static_cast<double>(data.n());
  if (weight_decay != 0.0) {
    loss += 0.5 * weight_decay * kernels::dot(params.data(), params.data(), params.size());
  }
  return loss;
}

std::vector<double> dataset_grad(std::span<const double> params, const ClientDataset& data,
                                 int classes, double weight_decay) {
  if (data.n() == 0) throw SpecError("gradient of empty shard");
  std::vector<double> grad(params.size(), 0.0);
  std::vector<double> logits_buf(static_cast<std::size_t>(classes));
  std::vector<int> all(static_cast<std::size_t>(data.n()));
  std::iota(all.begin(), all.end(), 0);
  batch_grad(params, data, classes, weight_decay, all, grad, logits_buf);
  return grad;
}

std::vector<double> client_opt(const ModelState& model, const ClientDataset& data,
                               const hp::HpConfig& config, rng::Stream& stream) {
  if (data.n() == 0) throw SpecError("client_opt on empty shard");
  if (data.dim != model.dim) throw SpecError("client_opt: feature dimension mismatch");
  const double lr = config.at("client_lr");
  const double momentum = config.at("momentum");
  const double weight_decay = config.at("weight_decay");
  const int epochs = static_cast<int>(config.at("epochs"));
  int batch_size = static_cast<int>(config.at("batch_size"));
  if (batch_size < 1 || epochs < 1) throw SpecError("client_opt: batch_size and epochs must be >= 1");
  batch_size = std::min(batch_size, data.n());

  std::vector<double> local(model.params);
  std::vector<double> velocity(local.size(), 0.0);
  std::vector<double> grad(local.size());
  std::vector<double> logits_buf(static_cast<std::size_t>(model.classes));
  std::vector<int> perm(static_cast<std::size_t>(data.n()));
  std::iota(perm.begin(), perm.end(), 0);

  for (int e = 0; e < epochs; ++e) {
    stream.shuffle(perm.begin(), perm.end());
    for (int start = 0; start < data.n(); start += batch_size) {
      const int len = std::min(batch_size, data.n() - start);
      std::span<const int> batch(perm.data() + start, static_cast<std::size_t>(len));
      std::fill(grad.begin(), grad.end(), 0.0);
      batch_grad(local, data, model.classes, weight_decay, batch, grad, logits_buf);
      kernels::scale(velocity.data(), momentum, velocity.size());
      kernels::axpy(1.0, grad.data(), velocity.data(), velocity.size());
      kernels::axpy(-lr, velocity.data(), local.data(), local.size());
    }
  }
  kernels::axpy(-1.0, model.params.data(), local.data(), local.size());
  return local;  // now holds local - server
}

void server_opt(ModelState& model, const std::vector<std::vector<double>>& deltas,
                std::span<const double> weights, const hp::HpConfig& config) {
  if (deltas.empty()) throw SpecError("server_opt: no client deltas");
  const std::size_t n = model.param_count();
  for (const auto& d : deltas) {
    if (d.size() != n) throw SpecError("server_opt: delta shape mismatch");
  }
  std::vector<double> avg(n, 0.0);
  if (weights.empty()) {
    const double w = 1.0 / static_cast<double>(deltas.size());
    for (const auto& d : deltas) kernels::axpy(w, d.data(), avg.data(), n);
  } else {
    if (weights.size() != deltas.size()) throw SpecError("server_opt: weight count mismatch");
    double total = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw SpecError("server_opt: negative weight");
      total += w;
    }
    if (!(total > 0.0)) throw SpecError("server_opt: weights sum to zero");
    for (std::size_t i = 0; i < deltas.size(); ++i) {
      kernels::axpy(weights[i] / total, deltas[i].data(), avg.data(), n);
    }
  }
  const double eff_lr =
      config.at("server_lr") * std::pow(config.at("lr_decay"), model.round_index);
  kernels::adam_step(model.params.data(), model.opt_m.data(), model.opt_v.data(), avg.data(), n,
                     config.at("beta1"), config.at("beta2"), eff_lr, kAdamTau);
  model.round_index += 1;
}

void train_more(ModelState& model, const hp::HpConfig& config,
                const ClientPopulation& population, int extra_rounds, TrainKey key) {
  if (extra_rounds < 0) throw SpecError("train_more: negative round count");
  if (model.dim != population.dim || model.classes != population.classes) {
    throw SpecError("train_more: model does not match population shape");
  }
  if (population.n_train() < kClientsPerRound) {
    throw SpecError("train_more: population has fewer train clients than a round samples");
  }
  for (int i = 0; i < extra_rounds; ++i) {
    const int r = model.round_index;
    rng::Stream round_stream(rng::derive(
        key.trial_seed, {kTagRound, key.config_uid, static_cast<std::uint64_t>(r)}));
    const std::vector<int> selected =
        round_stream.sample_without_replacement(population.n_train(), kClientsPerRound);
    std::vector<std::vector<double>> deltas;
    deltas.reserve(selected.size());
    for (int k : selected) {
      deltas.push_back(client_opt(model, population.train_clients[static_cast<std::size_t>(k)],
                                  config, round_stream));
    }
    std::vector<double> weights;
    if (population.mode == WeightingMode::weighted) {
      weights.reserve(selected.size());
      for (int k : selected) {
        weights.push_back(population.train_weights[static_cast<std::size_t>(k)]);
      }
    }
    server_opt(model, deltas, weights, config);
  }
}

ModelState train(const hp::HpConfig& config, const ClientPopulation& population, int rounds,
                 TrainKey key) {
  ModelState model = ModelState::init(population.dim, population.classes);
  train_more(model, config, population, rounds, key);
  return model;
}

double client_error(const ModelState& model, const ClientDataset& data) {
  if (data.n() == 0) throw SpecError("client_error on empty shard");
  if (data.dim != model.dim) throw SpecError("client_error: feature dimension mismatch");
  std::vector<double> z(static_cast<std::size_t>(model.classes));
  int wrong = 0;
  for (int i = 0; i < data.n(); ++i) {
    compute_logits(model.params, data.row(i), model.classes, model.dim, z.data());
    int best = 0;
    for (int c = 1; c < model.classes; ++c) {
      if (z[static_cast<std::size_t>(c)] > z[static_cast<std::size_t>(best)]) best = c;
    }
    if (best != data.labels[static_cast<std::size_t>(i)]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(data.n());
}

double aggregate_error(std::span<const double> errors, std::span<const double> weights) {
  if (errors.empty()) throw SpecError("aggregate_error: no client errors");
  if (errors.size() != weights.size()) throw SpecError("aggregate_error: weight count mismatch");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (weights[i] < 0.0) throw SpecError("aggregate_error: negative weight");
    num += weights[i] * errors[i];
    den += weights[i];
  }
  if (!(den > 0.0)) throw SpecError("aggregate_error: weights sum to zero");
  return num / den;
}

std::vector<double> per_client_errors(const ModelState& model, const ClientPopulation& population) {
  std::vector<double> errors;
  errors.reserve(population.val_clients.size());
  for (const auto& shard : population.val_clients) {
    errors.push_back(client_error(model, shard));
  }
  return errors;
}

double full_validation_error(const ModelState& model, const ClientPopulation& population) {
  const auto errors = per_client_errors(model, population);
  return aggregate_error(errors, population.val_weights);
}

}  // namespace fedtune::fed
