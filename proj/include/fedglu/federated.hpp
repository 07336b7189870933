#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedglu/cgm_data.hpp"
#include "fedglu/loss.hpp"
#include "fedglu/nn.hpp"

namespace fedglu::fed {

using nn::ParamVector;

/// One patient taking part in training. Only parameters ever leave it.
struct ClientState {
  std::string patient_id;
  cgm::SampleSet train;
  std::optional<cgm::SampleSet> val;
  ParamVector params;  // result of the latest local update

  std::size_t n() const noexcept { return train.size(); }
};

struct FedConfig {
  int rounds = 50;
  int local_epochs = 1;
  int batch_size = 500;
  double client_lr = 1e-3;
  double server_lr = 1.0;
  int finetune_epochs = 50;
  int finetune_patience = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ServerState {
  ParamVector global;
  int round = 0;
  double server_lr = 1.0;
  std::vector<double> global_train_mse;  // one entry per completed round
};

/// What one client sends back at the end of a round.
struct ClientReturn {
  std::string patient_id;
  std::size_t n_k = 0;
  ParamVector params;
  double mean_train_loss = 0.0;
};

/// Audit entry for one communication round. Parameter vectors are kept as
/// digests; full snapshots go through the round observer.
struct RoundRecord {
  int round = 0;
  std::vector<std::string> client_ids;  // ascending
  std::vector<std::size_t> n_k;
  std::vector<double> client_train_loss;
  std::vector<std::uint64_t> client_param_digests;
  std::size_t n = 0;  // aggregation denominator, sum of n_k
  std::uint64_t global_digest = 0;
  double mean_client_loss = 0.0;  // n_k-weighted
  double global_train_mse = 0.0;
};

using RoundLedger = std::vector<RoundRecord>;

/// FNV-1a over the raw bytes of a parameter vector.
std::uint64_t param_digest(std::span<const double> params);

/// Shuffle seed of a client in a given round; shared by the federated loop
/// and any sequential replay of it.
std::uint64_t client_round_seed(std::uint64_t seed, const std::string& patient_id, int round);

/// Loads `global`, runs cfg.local_epochs epochs of MSE minibatch Adam with a
/// fresh optimizer state and returns the resulting parameters (also stored
/// in the client).
ClientReturn client_update(ClientState& client, const std::vector<int>& dims, std::span<const double> global,
                           const FedConfig& cfg, std::uint64_t round_seed);

/// sum_k (n_k / n) w_k, accumulated in ascending patient_id order.
/// Throws NoClients / ShapeMismatch.
ParamVector weighted_average(std::span<const ClientReturn> returns);

/// Server step w <- w - server_lr * (w - w_avg); with server_lr == 1 the
/// result is w_avg exactly.
ServerState aggregate(ServerState server, std::span<const ClientReturn> returns);

struct FederatedResult {
  ServerState server;
  RoundLedger ledger;
};

/// Called after every aggregation with the round record and new weights.
using RoundObserver = std::function<void(const RoundRecord&, std::span<const double> global)>;

/// Full-participation FedAvg for cfg.rounds rounds starting from `initial`.
FederatedResult run_federated(std::vector<ClientState>& clients, const nn::MlpModel& initial, const FedConfig& cfg,
                              const RoundObserver& observer = {});

/// Personalizes the global weights on one client's data with the HH loss
/// (Adam, early stopping on cfg.finetune_patience).
nn::MlpModel local_finetune(const ClientState& client, const nn::MlpModel& global, const loss::HhParams& hh,
                            const FedConfig& cfg, std::uint64_t seed);

/// Candidate alphas used when none are given: 0, 0.1, ..., 1 plus 0.85, 0.95.
std::vector<double> default_alpha_grid();

struct AlphaSelection {
  double alpha = 0.5;
  std::vector<double> candidates;
  std::vector<std::optional<double>> scores;  // hypo RMSE + hyper RMSE
  bool fallback = false;  // no excursions of one kind in the training data
};

inline constexpr double kFallbackAlpha = 0.5;

/// Argmin of `score` over the candidates; ties go to the larger alpha. A
/// candidate with no score makes the whole selection fall back to 0.5.
AlphaSelection select_alpha(std::span<const double> candidates,
                            const std::function<std::optional<double>(double)>& score);

struct SelectedModel {
  AlphaSelection selection;
  nn::MlpModel model;
};

/// Trains one model per candidate with `train_fn`, scores each on the
/// training data by hypo + hyper RMSE and keeps the best. When the training
/// targets lack either excursion region only the fallback alpha is trained.
SelectedModel select_alpha_by_training(const std::function<nn::MlpModel(double)>& train_fn,
                                       std::span<const double> candidates, const cgm::SampleSet& train,
                                       const cgm::Normalizer& norm = {});

/// A model trained on one patient's samples.
nn::MlpModel train_local(const cgm::SampleSet& samples, const loss::LossSpec& loss, const nn::TrainConfig& cfg,
                         std::uint64_t init_seed, const std::vector<int>& dims = nn::kGlucoseArchitecture);

/// A model trained on every patient's samples pooled in the given order.
nn::MlpModel train_central(std::span<const cgm::SampleSet> per_patient, const loss::LossSpec& loss,
                           const nn::TrainConfig& cfg, std::uint64_t init_seed,
                           const std::vector<int>& dims = nn::kGlucoseArchitecture);

}  // namespace fedglu::fed
