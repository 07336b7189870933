#include "fedglu/nn.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "fedglu/errors.hpp"
#include "fedglu/rng.hpp"

namespace fedglu::nn {

namespace {

void check_dims(std::span<const int> dims) {
  if (dims.size() < 2) throw DimensionMismatch("an MLP needs at least an input and an output layer");
  for (int d : dims) {
    if (d < 1) throw DimensionMismatch("layer widths must be positive");
  }
}

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NonFiniteParameter(std::string(what) + " became non-finite");
  }
}

void require_finite_grad(std::span<const double> grads) {
  for (double g : grads) {
    if (!std::isfinite(g)) throw NonFiniteGradient("gradient contains NaN or Inf");
  }
}

}  // namespace

MlpModel::MlpModel(std::vector<int> dims) : dims_(std::move(dims)) {
  check_dims(dims_);
  build_offsets();
  params_.assign(count_params(dims_), 0.0);
}

MlpModel::MlpModel(std::vector<int> dims, ParamVector params) : dims_(std::move(dims)), params_(std::move(params)) {
  check_dims(dims_);
  build_offsets();
  if (params_.size() != count_params(dims_)) {
    throw DimensionMismatch("parameter vector has " + std::to_string(params_.size()) + " entries, architecture needs " +
                            std::to_string(count_params(dims_)));
  }
}

std::size_t MlpModel::count_params(std::span<const int> dims) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    n += static_cast<std::size_t>(dims[l + 1]) * (static_cast<std::size_t>(dims[l]) + 1);
  }
  return n;
}

void MlpModel::build_offsets() {
  offsets_.clear();
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    offsets_.push_back(off);
    off += static_cast<std::size_t>(dims_[l + 1]) * (static_cast<std::size_t>(dims_[l]) + 1);
  }
}

void MlpModel::assign(std::span<const double> params) {
  if (params.size() != params_.size()) {
    throw DimensionMismatch("cannot assign " + std::to_string(params.size()) + " parameters to a model with " +
                            std::to_string(params_.size()));
  }
  std::copy(params.begin(), params.end(), params_.begin());
}

Eigen::Map<const RowMatrix> MlpModel::weights(std::size_t layer) const {
  return {params_.data() + offsets_[layer], dims_[layer + 1], dims_[layer]};
}

Eigen::Map<RowMatrix> MlpModel::weights(std::size_t layer) {
  return {params_.data() + offsets_[layer], dims_[layer + 1], dims_[layer]};
}

Eigen::Map<const Eigen::VectorXd> MlpModel::bias(std::size_t layer) const {
  return {params_.data() + bias_offset(layer), dims_[layer + 1]};
}

Eigen::Map<Eigen::VectorXd> MlpModel::bias(std::size_t layer) {
  return {params_.data() + bias_offset(layer), dims_[layer + 1]};
}

MlpModel unflatten(const std::vector<int>& dims, ParamVector params) { return MlpModel(dims, std::move(params)); }

MlpModel init_model(std::uint64_t seed, const std::vector<int>& dims) {
  MlpModel model(dims);
  Rng rng(seed);
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(dims[l]));
    auto w = model.weights(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-bound, bound);
    }
  }
  return model;
}

ForwardCache forward_batch(const MlpModel& model, const Eigen::MatrixXd& inputs) {
  if (inputs.rows() != model.input_dim()) {
    throw DimensionMismatch("input has " + std::to_string(inputs.rows()) + " features, model expects " +
                            std::to_string(model.input_dim()));
  }
  ForwardCache cache;
  cache.dims = model.dims();
  const std::size_t layers = model.num_layers();
  cache.activations.reserve(layers + 1);
  cache.activations.push_back(inputs);
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z(model.dims()[l + 1], inputs.cols());
    z.noalias() = model.weights(l) * cache.activations.back();
    z.colwise() += model.bias(l);
    if (l + 1 < layers) z = z.cwiseMax(0.0);
    cache.activations.push_back(std::move(z));
  }
  return cache;
}

Prediction forward(const MlpModel& model, std::span<const double> x) {
  if (static_cast<int>(x.size()) != model.input_dim()) {
    throw DimensionMismatch("input has " + std::to_string(x.size()) + " features, model expects " +
                            std::to_string(model.input_dim()));
  }
  Eigen::MatrixXd in = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  Prediction p;
  p.cache = forward_batch(model, in);
  p.y = p.cache.output(0);
  return p;
}

void backward_batch(const MlpModel& model, const ForwardCache& cache, std::span<const double> dl_dyhat,
                    std::span<double> grad) {
  const std::size_t layers = model.num_layers();
  if (cache.dims != model.dims() || cache.activations.size() != layers + 1) {
    throw StaleCache("forward cache was produced by a different architecture");
  }
  const Eigen::Index batch = cache.batch();
  if (static_cast<Eigen::Index>(dl_dyhat.size()) != batch) {
    throw StaleCache("got " + std::to_string(dl_dyhat.size()) + " output gradients for a batch of " +
                     std::to_string(batch));
  }
  if (grad.size() != model.param_count()) throw DimensionMismatch("gradient buffer has the wrong length");
  for (std::size_t l = 0; l <= layers; ++l) {
    if (cache.activations[l].rows() != model.dims()[l] || cache.activations[l].cols() != batch) {
      throw StaleCache("forward cache shapes disagree with the model");
    }
  }

  Eigen::MatrixXd delta = Eigen::Map<const Eigen::RowVectorXd>(dl_dyhat.data(), batch);
  for (std::size_t l = layers; l-- > 0;) {
    const auto& a_in = cache.activations[l];
    Eigen::Map<RowMatrix> gw(grad.data() + model.weight_offset(l), model.dims()[l + 1], model.dims()[l]);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + model.bias_offset(l), model.dims()[l + 1]);
    gw.noalias() = delta * a_in.transpose();
    gb = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd upstream(model.dims()[l], batch);
    upstream.noalias() = model.weights(l).transpose() * delta;
    // ReLU'(z) is 1 where the activation is positive, 0 otherwise (including z = 0).
    delta = (a_in.array() > 0.0).select(upstream, 0.0);
  }
}

ParamVector backward(const MlpModel& model, const ForwardCache& cache, double dl_dyhat) {
  ParamVector grad(model.param_count(), 0.0);
  const double g[1] = {dl_dyhat};
  backward_batch(model, cache, g, grad);
  return grad;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionMismatch("Adam buffers are not aligned with the parameters");
  }
  require_finite_grad(grads);
  state.t += 1;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
  require_finite(params, "parameters");
}

void sgd_step(std::span<double> params, std::span<const double> grads, double lr) {
  if (grads.size() != params.size()) throw DimensionMismatch("SGD gradient length differs from parameters");
  require_finite_grad(grads);
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
  require_finite(params, "parameters");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (max_epochs < 0) throw ConfigError("max_epochs must be non-negative");
  if (patience < 0) throw ConfigError("patience must be non-negative");
}

namespace {

Eigen::MatrixXd gather(const cgm::SampleSet& samples, std::span<const std::size_t> idx) {
  const int wl = samples.wl();
  Eigen::MatrixXd x(wl, static_cast<Eigen::Index>(idx.size()));
  const double* src = samples.inputs().data();
  for (std::size_t j = 0; j < idx.size(); ++j) {
    std::copy_n(src + idx[j] * static_cast<std::size_t>(wl), wl, x.col(static_cast<Eigen::Index>(j)).data());
  }
  return x;
}

constexpr std::size_t kPredictChunk = 1024;

}  // namespace

std::vector<double> predict(const MlpModel& model, const cgm::SampleSet& samples, const cgm::Normalizer& norm) {
  std::vector<double> out;
  out.reserve(samples.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < samples.size(); start += kPredictChunk) {
    const std::size_t stop = std::min(samples.size(), start + kPredictChunk);
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto cache = forward_batch(model, gather(samples, idx));
    for (Eigen::Index j = 0; j < cache.batch(); ++j) out.push_back(norm.denormalize(cache.output(j)));
  }
  return out;
}

double evaluate_loss(const MlpModel& model, const cgm::SampleSet& samples, const loss::LossSpec& loss,
                     const cgm::Normalizer& norm) {
  if (samples.empty()) throw EmptyDataset("cannot evaluate on an empty sample set");
  const auto pred = predict(model, samples, norm);
  return loss::batch_loss(loss, samples.targets(), pred);
}

TrainResult train(MlpModel model, const cgm::SampleSet& samples, const loss::LossSpec& loss,
                  const TrainConfig& cfg, const cgm::SampleSet* val, const cgm::Normalizer& norm) {
  cfg.validate();
  loss.validate();
  if (samples.empty()) throw EmptyDataset("cannot train on an empty sample set");
  if (samples.wl() != model.input_dim()) {
    throw DimensionMismatch("samples have " + std::to_string(samples.wl()) + " inputs, model expects " +
                            std::to_string(model.input_dim()));
  }

  TrainResult result;
  const bool use_val = val != nullptr && !val->empty();
  const std::size_t n = samples.size();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  AdamState adam = AdamState::zeros(model.param_count());
  ParamVector grad(model.param_count(), 0.0);
  std::vector<double> pred;
  std::vector<double> dl_du;

  double best = std::numeric_limits<double>::infinity();
  int waited = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const auto cache = forward_batch(model, gather(samples, idx));

      const std::size_t b = idx.size();
      pred.resize(b);
      dl_du.resize(b);
      const double inv_b = 1.0 / static_cast<double>(b);
      for (std::size_t j = 0; j < b; ++j) {
        const double y = samples.targets()[idx[j]];
        pred[j] = norm.denormalize(cache.output(static_cast<Eigen::Index>(j)));
        loss_sum += loss::per_sample_loss(loss, y, pred[j]);
        // chain rule through the denormalization: d(mg/dL)/d(unit) = scale
        dl_du[j] = loss::per_sample_grad(loss, y, pred[j]) * inv_b * norm.scale();
      }
      backward_batch(model, cache, dl_du, grad);
      adam_step(model.params(), grad, adam, cfg.learning_rate);
    }
    result.train_loss.push_back(loss_sum / static_cast<double>(n));
    result.epochs_run = epoch + 1;

    double monitored = result.train_loss.back();
    if (use_val) {
      result.val_loss.push_back(evaluate_loss(model, *val, loss, norm));
      monitored = result.val_loss.back();
    }
    if (monitored < best) {
      best = monitored;
      waited = 0;
    } else {
      ++waited;
    }
    if (waited >= cfg.patience) {
      result.stopped_early = epoch + 1 < cfg.max_epochs;
      break;
    }
  }
  result.model = std::move(model);
  return result;
}

}  // namespace fedglu::nn
