#include "fedglu/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedglu/errors.hpp"
#include "fedglu/rng.hpp"

namespace fedglu::cgm {

void SyntheticCohortSpec::validate() const {
  if (n_patients < 1) throw ConfigError("synthetic.patients must be >= 1");
  if (days_per_patient < 1) throw ConfigError("synthetic.days must be >= 1");
  auto in_unit = [](double f) { return f >= 0.0 && f <= 1.0; };
  if (!in_unit(target_hypo_fraction) || !in_unit(target_hyper_fraction)) {
    throw ConfigError("synthetic target fractions must lie in [0, 1]");
  }
  if (target_hypo_fraction + target_hyper_fraction >= 1.0) {
    throw ConfigError("synthetic target fractions must sum to less than 1");
  }
  if (!(missing_fraction >= 0.0 && missing_fraction < 0.5)) {
    throw ConfigError("synthetic.missing_fraction must lie in [0, 0.5)");
  }
}

namespace {

constexpr int kReadingsPerDay = 288;
constexpr double kBaselineMean = 140.0;
constexpr double kArCoefficient = 0.98;
constexpr double kArInnovationSd = 3.0;
constexpr double kSensorNoiseSd = 5.0;
constexpr double kMealPeakReadings = 15.0;  // ~75 min to peak
constexpr double kDipPeakReadings = 8.0;    // ~40 min to trough
constexpr double kDipsPerDay = 1.2;

// Scale-free pieces of one patient's trace. The final trace is
// baseline + meal_scale * meals - dip_scale * dips + noise, so the scales
// can be searched without redrawing any randomness.
struct Components {
  std::vector<double> baseline;
  std::vector<double> meals;
  std::vector<double> dips;
  std::vector<double> noise;
  std::vector<bool> missing;
};

// Gamma-like bump with unit peak at `peak` readings after onset.
void add_bump(std::vector<double>& track, std::size_t onset, double amplitude, double peak) {
  const std::size_t len = static_cast<std::size_t>(8.0 * peak);
  for (std::size_t k = 0; k < len && onset + k < track.size(); ++k) {
    const double tau = static_cast<double>(k) / peak;
    track[onset + k] += amplitude * tau * std::exp(1.0 - tau);
  }
}

Components draw_components(std::uint64_t seed, int days, double missing_fraction) {
  Rng rng(seed);
  const std::size_t n = static_cast<std::size_t>(days) * kReadingsPerDay;
  Components c;
  c.baseline.resize(n);
  c.meals.assign(n, 0.0);
  c.dips.assign(n, 0.0);
  c.noise.resize(n);
  c.missing.assign(n, false);

  // Per-patient traits give the cohort a spread of glycemic profiles.
  const double mean = kBaselineMean + rng.normal(0.0, 8.0);
  const double meal_gain = std::exp(rng.normal(0.0, 0.25));
  const double dip_gain = std::exp(rng.normal(0.0, 0.45));

  const double stationary_sd = kArInnovationSd / std::sqrt(1.0 - kArCoefficient * kArCoefficient);
  double ar = rng.normal(0.0, stationary_sd);
  for (std::size_t i = 0; i < n; ++i) {
    ar = kArCoefficient * ar + rng.normal(0.0, kArInnovationSd);
    c.baseline[i] = mean + ar;
  }

  static constexpr double kMealHours[] = {7.5, 12.5, 19.0};
  for (int d = 0; d < days; ++d) {
    const double day_start = static_cast<double>(d) * kReadingsPerDay;
    for (double hour : kMealHours) {
      const double at = day_start + (hour + rng.normal(0.0, 0.75)) * 12.0;
      const double amp = meal_gain * rng.uniform(0.6, 1.4);
      if (at >= 0.0) add_bump(c.meals, static_cast<std::size_t>(at), amp, kMealPeakReadings);
    }
    if (rng.uniform() < 0.35) {
      const double at = day_start + rng.uniform(14.5, 17.0) * 12.0;
      add_bump(c.meals, static_cast<std::size_t>(at), 0.5 * meal_gain * rng.uniform(0.6, 1.4), kMealPeakReadings);
    }
  }

  double t = rng.exponential(kDipsPerDay / kReadingsPerDay);
  while (t < static_cast<double>(n)) {
    const double amp = dip_gain * rng.uniform(0.6, 1.4);
    add_bump(c.dips, static_cast<std::size_t>(t), amp, kDipPeakReadings);
    t += rng.exponential(kDipsPerDay / kReadingsPerDay);
  }

  for (std::size_t i = 0; i < n; ++i) c.noise[i] = rng.normal(0.0, kSensorNoiseSd);

  // Dropouts: mostly short runs that interpolation repairs, some long ones.
  const auto target_missing = static_cast<std::size_t>(missing_fraction * static_cast<double>(n));
  std::size_t marked = 0;
  while (marked < target_missing) {
    const std::size_t len = rng.uniform() < 0.75 ? 1 + rng.below(5) : 6 + rng.below(13);
    const std::size_t start = rng.below(n);
    for (std::size_t k = start; k < std::min(n, start + len); ++k) {
      if (!c.missing[k]) {
        c.missing[k] = true;
        ++marked;
      }
    }
  }
  return c;
}

GlucoseSeries render(const Components& c, const std::string& id, double meal_scale, double dip_scale) {
  GlucoseSeries s;
  s.patient_id = id;
  s.readings.reserve(c.baseline.size());
  for (std::size_t i = 0; i < c.baseline.size(); ++i) {
    const auto ts = static_cast<std::int64_t>(i) * kIntervalSeconds;
    if (c.missing[i]) {
      s.readings.push_back(GlucoseReading::missing(ts));
      continue;
    }
    const double g = std::round(c.baseline[i] + meal_scale * c.meals[i] - dip_scale * c.dips[i] + c.noise[i]);
    if (g < kGlucoseFloor) {
      s.readings.push_back(GlucoseReading::low(ts));
    } else if (g > kGlucoseCeiling) {
      s.readings.push_back(GlucoseReading::high(ts));
    } else {
      s.readings.push_back(GlucoseReading::observed(ts, g));
    }
  }
  return s;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Medians {
  double hypo;
  double hyper;
};

Medians cohort_medians(const std::vector<Components>& comps, double meal_scale, double dip_scale) {
  std::vector<double> hypo;
  std::vector<double> hyper;
  for (const auto& c : comps) {
    const auto p = excursion_profile(render(c, {}, meal_scale, dip_scale));
    hypo.push_back(p.hypo_pct);
    hyper.push_back(p.hyper_pct);
  }
  return {median(hypo), median(hyper)};
}

// Smallest scale in [lo, hi] whose metric reaches target (metric is
// non-decreasing in the scale).
template <typename F>
double bisect(F metric, double target, double lo, double hi) {
  if (metric(lo) >= target) return lo;
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (metric(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;
}

}  // namespace

SyntheticCohort generate_synthetic_cohort(const SyntheticCohortSpec& spec) {
  spec.validate();
  std::vector<Components> comps;
  std::vector<std::string> ids;
  for (int p = 0; p < spec.n_patients; ++p) {
    char id[32];
    std::snprintf(id, sizeof(id), "synth_%03d", p + 1);
    ids.emplace_back(id);
    comps.push_back(
        draw_components(derive_seed(spec.rng_seed, "synthetic/patient/" + std::to_string(p)), spec.days_per_patient,
                        spec.missing_fraction));
  }

  const double hypo_target = 100.0 * spec.target_hypo_fraction;
  const double hyper_target = 100.0 * spec.target_hyper_fraction;
  constexpr double kMaxMealScale = 600.0;
  constexpr double kMaxDipScale = 400.0;

  double meal_scale = 0.0;
  double dip_scale = 0.0;
  // Alternate one-dimensional searches; each scale mostly drives one metric.
  for (int round = 0; round < 6; ++round) {
    if (hyper_target > 0.0) {
      meal_scale = bisect([&](double s) { return cohort_medians(comps, s, dip_scale).hyper; }, hyper_target, 0.0,
                          kMaxMealScale);
    }
    if (hypo_target > 0.0) {
      dip_scale = bisect([&](double s) { return cohort_medians(comps, meal_scale, s).hypo; }, hypo_target, 0.0,
                         kMaxDipScale);
    }
    const auto m = cohort_medians(comps, meal_scale, dip_scale);
    if (std::abs(m.hypo - hypo_target) < 0.1 && std::abs(m.hyper - hyper_target) < 0.5) break;
  }

  SyntheticCohort out;
  out.audit.meal_scale = meal_scale;
  out.audit.dip_scale = dip_scale;
  std::vector<double> hypo;
  std::vector<double> hyper;
  for (std::size_t p = 0; p < comps.size(); ++p) {
    out.series.push_back(render(comps[p], ids[p], meal_scale, dip_scale));
    const auto prof = excursion_profile(out.series.back());
    out.audit.per_patient.push_back(prof);
    hypo.push_back(prof.hypo_pct);
    hyper.push_back(prof.hyper_pct);
  }
  out.audit.median_hypo_pct = median(hypo);
  out.audit.median_hyper_pct = median(hyper);

  const bool hypo_ok = hypo_target > 0.0 ? std::abs(out.audit.median_hypo_pct - hypo_target) <= 1.0
                                         : out.audit.median_hypo_pct < 0.5;
  const bool hyper_ok = std::abs(out.audit.median_hyper_pct - hyper_target) <= 5.0;
  if (!hypo_ok || !hyper_ok) {
    throw InfeasibleSpec("calibration reached median hypo " + std::to_string(out.audit.median_hypo_pct) +
                         "% / hyper " + std::to_string(out.audit.median_hyper_pct) + "% against targets " +
                         std::to_string(hypo_target) + "% / " + std::to_string(hyper_target) + "%");
  }
  return out;
}

}  // namespace fedglu::cgm
