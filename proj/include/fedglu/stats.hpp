#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fedglu::stats {

/// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);

/// Two-sided tail probability P(|T| >= |t|) for Student's t with `dof`
/// degrees of freedom.
double student_t_two_sided_p(double t, double dof);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  double mean_delta = 0.0;
  std::size_t n = 0;
};

/// One-sample t-test of per-patient differences against zero. Throws
/// DegenerateVariance for fewer than two deltas or zero variance with a
/// nonzero mean.
TTestResult paired_t_test(std::span<const double> deltas);
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

/// 1-based ranks, ties receive the average of their positions.
std::vector<double> average_ranks(std::span<const double> values);

struct SpearmanResult {
  double rho = 0.0;
  double p = 1.0;
  std::size_t n = 0;
};

/// Pearson correlation of average ranks; p from the t approximation with
/// n - 2 degrees of freedom. Throws DegenerateVariance for constant input
/// or fewer than three points.
SpearmanResult spearman_rho(std::span<const double> x, std::span<const double> y);

}  // namespace fedglu::stats
