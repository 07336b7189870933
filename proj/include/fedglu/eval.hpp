#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedglu::eval {

/// Reference glucose and its forecast, both in mg/dL.
struct PredictionPair {
  double reference = 0.0;
  double prediction = 0.0;
};

/// Zips references with predictions, clipping predictions onto the
/// [40, 400] grid. `clipped` (optional) receives the number of clipped
/// predictions.
std::vector<PredictionPair> make_pairs(std::span<const double> reference, std::span<const double> prediction,
                                       std::size_t* clipped = nullptr);

/// sqrt(mean squared difference). Throws EmptySet.
double rmse(std::span<const PredictionPair> pairs);

/// RMSE split by the true value: hypo (< 70), normal [70, 180], hyper
/// (> 180). A region without pairs has no value.
struct RegionRmse {
  std::optional<double> overall;
  std::optional<double> hypo;
  std::optional<double> normal;
  std::optional<double> hyper;
  std::size_t n_overall = 0;
  std::size_t n_hypo = 0;
  std::size_t n_normal = 0;
  std::size_t n_hyper = 0;

  /// hypo + hyper RMSE, present only when both regions are.
  std::optional<double> combined() const {
    if (!hypo || !hyper) return std::nullopt;
    return *hypo + *hyper;
  }
};

RegionRmse region_rmse(std::span<const PredictionPair> pairs);

enum class Zone : std::size_t { A, B, CUpper, CLower, DLeft, DRight, ELeftUpper, ERightLower };
inline constexpr std::size_t kZoneCount = 8;
inline constexpr std::array<Zone, kZoneCount> kAllZones = {Zone::A,     Zone::B,      Zone::CUpper,     Zone::CLower,
                                                           Zone::DLeft, Zone::DRight, Zone::ELeftUpper, Zone::ERightLower};

std::string_view zone_name(Zone z);

/// Clarke error grid zone of one (reference, prediction) pair. Rules are
/// tried in the order A, E, C, D; anything left is B.
Zone cega_classify(const PredictionPair& pair);

/// Zone percentages for one patient, with the A+B / C / D+E groupings.
struct ZoneBreakdown {
  std::array<std::size_t, kZoneCount> counts{};
  std::size_t total = 0;
  std::array<double, kZoneCount> pct{};
  double ab = 0.0;
  double c = 0.0;
  double de = 0.0;
};

ZoneBreakdown cega_breakdown(std::span<const PredictionPair> pairs);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

MeanStd mean_std(std::span<const double> values);

struct CegaSummary {
  std::vector<ZoneBreakdown> per_patient;
  std::array<MeanStd, kZoneCount> zones{};
  MeanStd ab;
  MeanStd c;
  MeanStd de;
};

/// Per-patient breakdowns plus cohort mean and population std. Throws
/// EmptyCohort for no patients and EmptySet for a patient without pairs.
CegaSummary cega_summary(std::span<const std::vector<PredictionPair>> per_patient);

enum class Region { Hypo, Hyper };

struct PatientProfile {
  std::string patient_id;
  double hypo_pct = 0.0;
  double hyper_pct = 0.0;
  double improvement = 0.0;  // RMSE improvement of one regime over another
};

struct ProfileBin {
  std::vector<std::string> patient_ids;
  double pct_lo = 0.0;
  double pct_hi = 0.0;
  double mean_improvement = 0.0;
  double var_improvement = 0.0;  // population
};

/// Equal-count bins ordered by the region percentage (ties by patient id);
/// the first `n % n_bins` bins take one extra patient. Throws
/// TooFewPatients when there are fewer patients than bins.
std::vector<ProfileBin> profile_bins(std::vector<PatientProfile> patients, Region region, int n_bins = 10);

}  // namespace fedglu::eval
