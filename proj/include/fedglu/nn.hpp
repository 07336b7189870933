#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "fedglu/cgm_data.hpp"
#include "fedglu/loss.hpp"

namespace fedglu::nn {

/// Flattened parameters in canonical order: layer 0 weights (row-major,
/// out x in), layer 0 biases, layer 1 weights, ... Aligned so Eigen takes
/// the same vectorized path (and summation order) on every allocation.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// 24 inputs -> 512 -> 256 -> 256 -> 64 -> 1 output.
inline const std::vector<int> kGlucoseArchitecture = {24, 512, 256, 256, 64, 1};

/// Dense feed-forward network, ReLU on hidden layers and identity output.
/// Parameters live in one contiguous buffer; per-layer accessors are views.
class MlpModel {
 public:
  MlpModel() = default;
  /// All-zero parameters.
  explicit MlpModel(std::vector<int> dims);
  /// Adopts a flattened parameter vector. Throws DimensionMismatch.
  MlpModel(std::vector<int> dims, ParamVector params);

  static std::size_t count_params(std::span<const int> dims);

  const std::vector<int>& dims() const noexcept { return dims_; }
  std::size_t num_layers() const noexcept { return dims_.empty() ? 0 : dims_.size() - 1; }
  std::size_t param_count() const noexcept { return params_.size(); }
  int input_dim() const { return dims_.front(); }

  std::span<const double> params() const noexcept { return params_; }
  std::span<double> params() noexcept { return params_; }
  ParamVector flatten() const { return params_; }
  void assign(std::span<const double> params);

  Eigen::Map<const RowMatrix> weights(std::size_t layer) const;
  Eigen::Map<RowMatrix> weights(std::size_t layer);
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;
  Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);

  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + static_cast<std::size_t>(dims_[layer + 1]) * static_cast<std::size_t>(dims_[layer]);
  }

  friend bool operator==(const MlpModel& a, const MlpModel& b) {
    return a.dims_ == b.dims_ && a.params_ == b.params_;
  }

 private:
  void build_offsets();

  std::vector<int> dims_;
  std::vector<std::size_t> offsets_;
  ParamVector params_;
};

/// Rebuilds a model from a flattened vector (inverse of flatten()).
MlpModel unflatten(const std::vector<int>& dims, ParamVector params);

/// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
MlpModel init_model(std::uint64_t seed, const std::vector<int>& dims = kGlucoseArchitecture);

/// Per-layer activations of a forward pass; column j belongs to sample j.
/// activations[0] is the input, activations.back() the (1 x B) output.
struct ForwardCache {
  std::vector<int> dims;
  std::vector<Eigen::MatrixXd> activations;

  Eigen::Index batch() const { return activations.empty() ? 0 : activations.front().cols(); }
  double output(Eigen::Index j = 0) const { return activations.back()(0, j); }
};

struct Prediction {
  double y = 0.0;  // normalized units
  ForwardCache cache;
};

Prediction forward(const MlpModel& model, std::span<const double> x);
ForwardCache forward_batch(const MlpModel& model, const Eigen::MatrixXd& inputs);

/// Gradient of a scalar loss given d(loss)/d(output) for one forward pass.
ParamVector backward(const MlpModel& model, const ForwardCache& cache, double dl_dyhat);

/// Gradient of sum_j loss_j given per-column d(loss_j)/d(output_j); writes
/// into `grad` (overwritten, size param_count()).
void backward_batch(const MlpModel& model, const ForwardCache& cache, std::span<const double> dl_dyhat,
                    std::span<double> grad);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState zeros(std::size_t n) {
    AdamState s;
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    return s;
  }
};

/// Bias-corrected Adam. Throws NonFiniteGradient / NonFiniteParameter.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr);

/// params -= lr * grads. Throws NonFiniteGradient / NonFiniteParameter.
void sgd_step(std::span<double> params, std::span<const double> grads, double lr);

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 500;
  int max_epochs = 50;
  int patience = 10;  // epochs without improvement before stopping
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  MlpModel model;
  std::vector<double> train_loss;  // mean per-sample loss of each epoch
  std::vector<double> val_loss;    // filled when a validation set is given
  int epochs_run = 0;
  bool stopped_early = false;
};

/// Minibatch Adam on the denormalized (mg/dL) loss. Early stopping watches
/// the validation loss when `val` is non-empty, else the training loss, and
/// keeps the weights of the last step.
TrainResult train(MlpModel model, const cgm::SampleSet& samples, const loss::LossSpec& loss,
                  const TrainConfig& cfg, const cgm::SampleSet* val = nullptr, const cgm::Normalizer& norm = {});

/// Denormalized predictions (mg/dL) for every sample.
std::vector<double> predict(const MlpModel& model, const cgm::SampleSet& samples, const cgm::Normalizer& norm = {});

/// Mean loss of the model over a sample set.
double evaluate_loss(const MlpModel& model, const cgm::SampleSet& samples, const loss::LossSpec& loss,
                     const cgm::Normalizer& norm = {});

}  // namespace fedglu::nn
