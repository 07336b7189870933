#include "fedglu/loss.hpp"

#include <cmath>
#include <string>

#include "fedglu/errors.hpp"

namespace fedglu::loss {

void HhParams::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(alpha));
  if (!(hypo_threshold < center && center < hyper_threshold)) {
    throw ConfigError("HH thresholds must satisfy hypo < center < hyper");
  }
}

void LossSpec::validate() const {
  if (kind == LossKind::Hh) hh.validate();
}

namespace {

// Weight on the penalty term for a given true value.
double penalty_weight(const HhParams& p, double y) {
  if (y < p.hypo_threshold) return p.alpha;
  if (y > p.hyper_threshold) return 1.0 - p.alpha;
  return 0.0;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_batch(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.empty()) throw EmptyBatch("loss over an empty batch");
  if (y_true.size() != y_pred.size()) {
    throw DimensionMismatch("batch has " + std::to_string(y_true.size()) + " targets but " +
                            std::to_string(y_pred.size()) + " predictions");
  }
}

}  // namespace

double per_sample_loss(const LossSpec& spec, double y_true, double y_pred) {
  const double err = y_true - y_pred;
  const double se = err * err;
  if (spec.kind == LossKind::Mse) return se;
  const double w = penalty_weight(spec.hh, y_true);
  if (w == 0.0) return se;
  const double d = y_true - spec.hh.center;
  return se + w * std::abs(err) * d * d;
}

double per_sample_grad(const LossSpec& spec, double y_true, double y_pred) {
  const double err = y_true - y_pred;
  const double dse = -2.0 * err;
  if (spec.kind == LossKind::Mse) return dse;
  const double w = penalty_weight(spec.hh, y_true);
  if (w == 0.0) return dse;
  const double d = y_true - spec.hh.center;
  return dse - w * sign(err) * d * d;
}

double batch_loss(const LossSpec& spec, std::span<const double> y_true, std::span<const double> y_pred) {
  check_batch(y_true, y_pred);
  double sum = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) sum += per_sample_loss(spec, y_true[i], y_pred[i]);
  return sum / static_cast<double>(y_true.size());
}

std::vector<double> batch_grad(const LossSpec& spec, std::span<const double> y_true, std::span<const double> y_pred) {
  check_batch(y_true, y_pred);
  const double inv_n = 1.0 / static_cast<double>(y_true.size());
  std::vector<double> g(y_true.size());
  for (std::size_t i = 0; i < y_true.size(); ++i) g[i] = per_sample_grad(spec, y_true[i], y_pred[i]) * inv_n;
  return g;
}

}  // namespace fedglu::loss
