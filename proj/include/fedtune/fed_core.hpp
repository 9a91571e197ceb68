#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedtune/hp_space.hpp"
#include "fedtune/rng.hpp"

// Federated training simulator: synthetic client populations, a multinomial
// logistic-regression model, local SGD on sampled clients, and an adaptive
// (Adam-style) server optimizer with per-round learning-rate decay. Training
// is deterministic given (trial seed, config id): every round draws from its
// own derived stream, so a run can be stopped and warm-started at any round
// boundary with bitwise-identical results.
namespace fedtune::fed {

// Server optimizer denominator offset.
inline constexpr double kAdamTau = 1e-8;
// Clients participating in each training round.
inline constexpr int kClientsPerRound = 10;

struct ClientDataset {
  std::vector<double> features;  // row-major n x dim
  std::vector<int> labels;       // values in [0, classes)
  int dim = 0;

  int n() const { return static_cast<int>(labels.size()); }
  std::span<const double> row(int i) const {
    return {features.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(dim),
            static_cast<std::size_t>(dim)};
  }
};

// How client results are combined into one objective value.
enum class WeightingMode {
  uniform,   // every client counts equally (p_k = 1)
  weighted,  // clients count in proportion to their sample count (p_k = n_k)
};

struct ClientPopulation {
  std::vector<ClientDataset> train_clients;
  std::vector<ClientDataset> val_clients;
  std::vector<double> train_weights;  // aggregation weights, matching scheme on both splits
  std::vector<double> val_weights;
  WeightingMode mode = WeightingMode::uniform;
  int classes = 0;
  int dim = 0;
  // Identity of the generating draw; populations generated with the same seed
  // carry the same tag (used to derive per-config training seeds so that
  // identical populations get identical trainings).
  std::uint64_t seed_tag = 0;

  int n_train() const { return static_cast<int>(train_clients.size()); }
  int n_val() const { return static_cast<int>(val_clients.size()); }
};

struct PopulationParams {
  int n_train = 400;
  int n_val = 100;
  int classes = 10;
  int dim = 10;
  int samples_per_client = 100;
  // Uniform jitter on per-client sample counts (n_k in spc +/- spread); gives
  // the weighted mode distinct weights. 0 keeps all shards equal.
  int samples_spread = 0;
  double alpha = 1.0;          // Dirichlet concentration of per-client label mixes
  double feature_sigma = 1.0;  // Gaussian spread around class prototypes
  WeightingMode mode = WeightingMode::uniform;
};

// Class prototypes (classes x dim, row-major), standard normal entries.
std::vector<double> sample_prototypes(int classes, int dim, std::uint64_t seed);

// Mixes each prototype with an independent fresh draw:
//   proto' = cos(angle) * proto + sin(angle) * fresh.
// angle 0 returns the input unchanged; 90 degrees replaces it entirely.
std::vector<double> rotate_prototypes(std::span<const double> prototypes, double angle_deg,
                                      std::uint64_t seed);

// Synthetic non-iid population: each client draws a Dirichlet(alpha) label mix,
// then samples features as prototype[label] + sigma * N(0, I).
ClientPopulation generate_population(const PopulationParams& params, std::uint64_t seed);
// Same, with caller-supplied prototypes (for prototype-mismatch experiments).
ClientPopulation generate_population(const PopulationParams& params,
                                     std::span<const double> prototypes, std::uint64_t seed);

// Multinomial logistic regression. Parameter layout: classes x dim weight
// matrix (row-major, class-major) followed by `classes` biases.
struct ModelState {
  int dim = 0;
  int classes = 0;
  std::vector<double> params;
  std::vector<double> opt_m;  // server optimizer first moment
  std::vector<double> opt_v;  // server optimizer second moment
  int round_index = 0;        // rounds applied so far

  static ModelState init(int dim, int classes);  // zero-initialized
  std::size_t param_count() const { return params.size(); }
};

// Mean cross-entropy over the dataset plus (weight_decay/2)*||params||^2
// (all parameters, biases included).
double dataset_loss(std::span<const double> params, const ClientDataset& data, int classes,
                    double weight_decay);
// Gradient of dataset_loss.
std::vector<double> dataset_grad(std::span<const double> params, const ClientDataset& data,
                                 int classes, double weight_decay);

// Local training pass: `epochs` epochs of minibatch SGD with momentum and L2
// regularization starting from the server model. Batch size is clamped to the
// shard size; the final short batch is used. Returns the parameter delta
// (local - server). Consumes one shuffle per epoch from `stream`.
std::vector<double> client_opt(const ModelState& model, const ClientDataset& data,
                               const hp::HpConfig& config, rng::Stream& stream);

// One server update from a set of client deltas: the (optionally weighted)
// mean delta feeds Adam-style moment updates, with effective learning rate
// server_lr * lr_decay^round_index. Empty `weights` means the plain mean.
void server_opt(ModelState& model, const std::vector<std::vector<double>>& deltas,
                std::span<const double> weights, const hp::HpConfig& config);

// Identifies a training run for seed derivation: all randomness below is a
// pure function of (trial_seed, config_uid, round index).
struct TrainKey {
  std::uint64_t trial_seed = 0;
  std::uint64_t config_uid = 0;
};

// Continue training `model` for `extra_rounds` more rounds on `population`.
// Each round: sample kClientsPerRound distinct train clients uniformly, run
// client_opt on each, apply server_opt (weighted by the train weights in
// weighted mode). Bitwise-resumable: train(c, R) == train_more(train(c, R1), R-R1).
void train_more(ModelState& model, const hp::HpConfig& config,
                const ClientPopulation& population, int extra_rounds, TrainKey key);

// Train from scratch for `rounds` rounds.
ModelState train(const hp::HpConfig& config, const ClientPopulation& population, int rounds,
                 TrainKey key);

// Misclassification rate of the model on one shard; argmax ties resolve to the
// lowest class index. Throws on an empty shard.
double client_error(const ModelState& model, const ClientDataset& data);

// Weighted mean error: sum(w_k * e_k) / sum(w_k). Throws on empty input,
// length mismatch, negative weights or zero total weight.
double aggregate_error(std::span<const double> errors, std::span<const double> weights);

std::vector<double> per_client_errors(const ModelState& model, const ClientPopulation& population);

// Aggregate error over every validation client with the population's weights.
double full_validation_error(const ModelState& model, const ClientPopulation& population);

}  // namespace fedtune::fed
