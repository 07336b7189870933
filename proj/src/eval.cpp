#include "fedglu/eval.hpp"

#include <algorithm>
#include <cmath>

#include "fedglu/errors.hpp"

namespace fedglu::eval {

std::vector<PredictionPair> make_pairs(std::span<const double> reference, std::span<const double> prediction,
                                       std::size_t* clipped) {
  if (reference.size() != prediction.size()) {
    throw DimensionMismatch("reference and prediction lengths differ");
  }
  std::vector<PredictionPair> out(reference.size());
  std::size_t n_clipped = 0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double p = std::clamp(prediction[i], 40.0, 400.0);
    if (p != prediction[i]) ++n_clipped;
    out[i] = {reference[i], p};
  }
  if (clipped) *clipped = n_clipped;
  return out;
}

double rmse(std::span<const PredictionPair> pairs) {
  if (pairs.empty()) throw EmptySet("RMSE of an empty set");
  double sum = 0.0;
  for (const auto& p : pairs) {
    const double e = p.reference - p.prediction;
    sum += e * e;
  }
  return std::sqrt(sum / static_cast<double>(pairs.size()));
}

RegionRmse region_rmse(std::span<const PredictionPair> pairs) {
  double s_all = 0.0, s_hypo = 0.0, s_norm = 0.0, s_hyper = 0.0;
  RegionRmse r;
  for (const auto& p : pairs) {
    const double e = p.reference - p.prediction;
    const double se = e * e;
    s_all += se;
    ++r.n_overall;
    if (p.reference < 70.0) {
      s_hypo += se;
      ++r.n_hypo;
    } else if (p.reference > 180.0) {
      s_hyper += se;
      ++r.n_hyper;
    } else {
      s_norm += se;
      ++r.n_normal;
    }
  }
  auto finish = [](double s, std::size_t n) -> std::optional<double> {
    if (n == 0) return std::nullopt;
    return std::sqrt(s / static_cast<double>(n));
  };
  r.overall = finish(s_all, r.n_overall);
  r.hypo = finish(s_hypo, r.n_hypo);
  r.normal = finish(s_norm, r.n_normal);
  r.hyper = finish(s_hyper, r.n_hyper);
  return r;
}

std::string_view zone_name(Zone z) {
  switch (z) {
    case Zone::A: return "A";
    case Zone::B: return "B";
    case Zone::CUpper: return "C_upper";
    case Zone::CLower: return "C_lower";
    case Zone::DLeft: return "D_left";
    case Zone::DRight: return "D_right";
    case Zone::ELeftUpper: return "E_left_upper";
    case Zone::ERightLower: return "E_right_lower";
  }
  return "?";
}

Zone cega_classify(const PredictionPair& pair) {
  const double y = pair.reference;
  const double p = pair.prediction;
  if ((y <= 70.0 && p <= 70.0) || (p >= 0.8 * y && p <= 1.2 * y)) return Zone::A;
  if (y <= 70.0 && p >= 180.0) return Zone::ELeftUpper;
  if (y >= 180.0 && p <= 70.0) return Zone::ERightLower;
  if (y >= 70.0 && y <= 290.0 && p >= y + 110.0) return Zone::CUpper;
  if (y >= 130.0 && y <= 180.0 && p <= (7.0 / 5.0) * y - 182.0) return Zone::CLower;
  if (y >= 240.0 && p >= 70.0 && p <= 180.0) return Zone::DRight;
  if (y <= 175.0 / 3.0 && p >= 70.0 && p <= 180.0) return Zone::DLeft;
  if (y >= 175.0 / 3.0 && y <= 70.0 && p >= (6.0 / 5.0) * y && p <= 180.0) return Zone::DLeft;
  return Zone::B;
}

ZoneBreakdown cega_breakdown(std::span<const PredictionPair> pairs) {
  ZoneBreakdown z;
  for (const auto& p : pairs) ++z.counts[static_cast<std::size_t>(cega_classify(p))];
  z.total = pairs.size();
  if (z.total == 0) return z;
  const double n = static_cast<double>(z.total);
  auto pct = [n](std::size_t count) { return 100.0 * static_cast<double>(count) / n; };
  for (std::size_t i = 0; i < kZoneCount; ++i) z.pct[i] = pct(z.counts[i]);
  auto count = [&](Zone zone) { return z.counts[static_cast<std::size_t>(zone)]; };
  // groupings from integer counts, not from summed percentages
  z.ab = pct(count(Zone::A) + count(Zone::B));
  z.c = pct(count(Zone::CUpper) + count(Zone::CLower));
  z.de = pct(count(Zone::DLeft) + count(Zone::DRight) + count(Zone::ELeftUpper) + count(Zone::ERightLower));
  return z;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd m;
  if (values.empty()) return m;
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  m.mean = sum / n;
  double ss = 0.0;
  for (double v : values) ss += (v - m.mean) * (v - m.mean);
  m.std = std::sqrt(ss / n);
  return m;
}

CegaSummary cega_summary(std::span<const std::vector<PredictionPair>> per_patient) {
  if (per_patient.empty()) throw EmptyCohort("CEGA summary over an empty cohort");
  CegaSummary s;
  for (const auto& pairs : per_patient) {
    if (pairs.empty()) throw EmptySet("CEGA summary: a patient has no prediction pairs");
    s.per_patient.push_back(cega_breakdown(pairs));
  }
  std::vector<double> col(s.per_patient.size());
  for (std::size_t z = 0; z < kZoneCount; ++z) {
    for (std::size_t i = 0; i < col.size(); ++i) col[i] = s.per_patient[i].pct[z];
    s.zones[z] = mean_std(col);
  }
  for (std::size_t i = 0; i < col.size(); ++i) col[i] = s.per_patient[i].ab;
  s.ab = mean_std(col);
  for (std::size_t i = 0; i < col.size(); ++i) col[i] = s.per_patient[i].c;
  s.c = mean_std(col);
  for (std::size_t i = 0; i < col.size(); ++i) col[i] = s.per_patient[i].de;
  s.de = mean_std(col);
  return s;
}

std::vector<ProfileBin> profile_bins(std::vector<PatientProfile> patients, Region region, int n_bins) {
  if (n_bins < 1) throw ConfigError("n_bins must be positive");
  if (patients.size() < static_cast<std::size_t>(n_bins)) {
    throw TooFewPatients(std::to_string(patients.size()) + " patients cannot fill " + std::to_string(n_bins) +
                         " bins");
  }
  auto key = [region](const PatientProfile& p) { return region == Region::Hypo ? p.hypo_pct : p.hyper_pct; };
  std::sort(patients.begin(), patients.end(), [&](const PatientProfile& a, const PatientProfile& b) {
    if (key(a) != key(b)) return key(a) < key(b);
    return a.patient_id < b.patient_id;
  });

  const std::size_t n = patients.size();
  const auto bins = static_cast<std::size_t>(n_bins);
  std::vector<ProfileBin> out;
  std::size_t start = 0;
  for (std::size_t b = 0; b < bins; ++b) {
    const std::size_t size = n / bins + (b < n % bins ? 1 : 0);
    ProfileBin bin;
    std::vector<double> imp;
    for (std::size_t i = start; i < start + size; ++i) {
      bin.patient_ids.push_back(patients[i].patient_id);
      imp.push_back(patients[i].improvement);
    }
    bin.pct_lo = key(patients[start]);
    bin.pct_hi = key(patients[start + size - 1]);
    const auto ms = mean_std(imp);
    bin.mean_improvement = ms.mean;
    bin.var_improvement = ms.std * ms.std;
    out.push_back(std::move(bin));
    start += size;
  }
  return out;
}

}  // namespace fedglu::eval
