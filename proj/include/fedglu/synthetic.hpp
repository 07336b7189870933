#pragma once

#include <cstdint>
#include <vector>

#include "fedglu/cgm_data.hpp"

namespace fedglu::cgm {

/// Parameters of the seeded stand-in cohort. Fractions are in [0, 1].
struct SyntheticCohortSpec {
  int n_patients = 20;
  int days_per_patient = 30;
  double target_hypo_fraction = 0.028;
  double target_hyper_fraction = 0.385;
  std::uint64_t rng_seed = 7;
  double missing_fraction = 0.02;

  void validate() const;
};

struct CohortAudit {
  std::vector<ExcursionProfile> per_patient;
  double median_hypo_pct = 0.0;
  double median_hyper_pct = 0.0;
  // calibrated excursion scales (mg/dL)
  double meal_scale = 0.0;
  double dip_scale = 0.0;
};

struct SyntheticCohort {
  std::vector<GlucoseSeries> series;
  CohortAudit audit;
};

/// Deterministic cohort: mean-reverting AR(1) baseline, meal bumps,
/// insulin dips and sensor noise, with bump/dip scales calibrated so the
/// cohort medians of hypo% and hyper% land on the targets (within 1 and 5
/// points). Throws InfeasibleSpec when the bounded search misses.
SyntheticCohort generate_synthetic_cohort(const SyntheticCohortSpec& spec);

}  // namespace fedglu::cgm
