#pragma once

#include <span>
#include <vector>

namespace fedglu::loss {

/// Parameters of the hypo/hyper-weighted loss. Thresholds and center are in
/// mg/dL; `alpha` splits the penalty between the two excursion regions.
struct HhParams {
  double alpha = 0.5;
  double hypo_threshold = 70.0;
  double hyper_threshold = 180.0;
  double center = 125.0;

  void validate() const;
};

enum class LossKind { Mse, Hh };

struct LossSpec {
  LossKind kind = LossKind::Mse;
  HhParams hh{};

  static LossSpec mse() { return {}; }
  static LossSpec hypo_hyper(double alpha) {
    LossSpec s;
    s.kind = LossKind::Hh;
    s.hh.alpha = alpha;
    return s;
  }
  void validate() const;
};

/// Squared error, plus |y - yhat| * (y - c)^2 weighted by alpha below the
/// hypo threshold and by (1 - alpha) above the hyper threshold. The normal
/// band [70, 180] is inclusive and uses plain squared error.
double per_sample_loss(const LossSpec& spec, double y_true, double y_pred);

/// d(loss)/d(y_pred); the |.| term uses sign(0) = 0.
double per_sample_grad(const LossSpec& spec, double y_true, double y_pred);

/// Mean of per-sample losses. Throws EmptyBatch.
double batch_loss(const LossSpec& spec, std::span<const double> y_true, std::span<const double> y_pred);

/// Gradient of batch_loss with respect to every prediction (each entry
/// carries the 1/N factor). Throws EmptyBatch.
std::vector<double> batch_grad(const LossSpec& spec, std::span<const double> y_true, std::span<const double> y_pred);

}  // namespace fedglu::loss
