#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>
#include <vector>

#include "fedglu/cgm_data.hpp"
#include "fedglu/errors.hpp"
#include "fedglu/rng.hpp"
#include "fedglu/synthetic.hpp"

using namespace fedglu;
using namespace fedglu::cgm;

namespace {

GlucoseSeries make_series(const std::vector<GlucoseReading>& readings) {
  GlucoseSeries s;
  s.patient_id = "p";
  s.readings = readings;
  return s;
}

// index-based helpers: value v, or missing when v < 0
GlucoseSeries from_values(const std::vector<double>& values) {
  GlucoseSeries s;
  s.patient_id = "p";
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto ts = static_cast<std::int64_t>(i) * kIntervalSeconds;
    s.readings.push_back(values[i] < 0 ? GlucoseReading::missing(ts) : GlucoseReading::observed(ts, values[i]));
  }
  return s;
}

std::vector<double> values_of(const GlucoseSeries& s) {
  std::vector<double> v;
  for (const auto& r : s.readings) v.push_back(r.is_value() ? r.value : -1.0);
  return v;
}

// Naive scanner: count window ends whose inputs and target are all observed.
std::size_t brute_force_windows(const GlucoseSeries& s, int wl, int ph) {
  std::size_t count = 0;
  const int n = static_cast<int>(s.size());
  for (int end = 0; end < n; ++end) {
    if (end - wl + 1 < 0 || end + ph >= n) continue;
    bool ok = s.readings[end + ph].is_value();
    for (int k = end - wl + 1; k <= end && ok; ++k) ok = s.readings[k].is_value();
    if (ok) ++count;
  }
  return count;
}

}  // namespace

TEST_CASE("clamp_sentinels") {
  const auto s = clamp_sentinels(make_series(
      {GlucoseReading::low(0), GlucoseReading::observed(300, 150), GlucoseReading::high(600)}));
  CHECK(values_of(s) == std::vector<double>{40, 150, 400});
  CHECK(values_of(clamp_sentinels(from_values({100, 100}))) == std::vector<double>{100, 100});
  CHECK(values_of(clamp_sentinels(from_values({39.5, 401.2}))) == std::vector<double>{40, 400});
  const auto with_gap = clamp_sentinels(from_values({-1, 50}));
  CHECK(with_gap.readings[0].is_missing());
  CHECK(clamp_sentinels(s) == s);
}

TEST_CASE("interpolate_gaps") {
  CHECK(values_of(interpolate_gaps(from_values({100, -1, 120}))) == std::vector<double>{100, 110, 120});
  CHECK(values_of(interpolate_gaps(from_values({80, -1, -1, 110}))) == std::vector<double>{80, 90, 100, 110});

  const auto five = interpolate_gaps(from_values({100, -1, -1, -1, -1, -1, 160}));
  CHECK(values_of(five) == std::vector<double>{100, 110, 120, 130, 140, 150, 160});

  const std::vector<double> six = {100, -1, -1, -1, -1, -1, -1, 160};
  CHECK(values_of(interpolate_gaps(from_values(six))) == six);

  const std::vector<double> edges = {-1, -1, 100, 120, -1};
  CHECK(values_of(interpolate_gaps(from_values(edges))) == edges);
}

TEST_CASE("preprocessing is idempotent and stays on the grid") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    GlucoseSeries s;
    for (int i = 0; i < 200; ++i) {
      const auto ts = static_cast<std::int64_t>(i) * kIntervalSeconds;
      const double u = rng.uniform();
      if (u < 0.1) s.readings.push_back(GlucoseReading::missing(ts));
      else if (u < 0.13) s.readings.push_back(GlucoseReading::low(ts));
      else if (u < 0.16) s.readings.push_back(GlucoseReading::high(ts));
      else s.readings.push_back(GlucoseReading::observed(ts, rng.uniform(20, 450)));
    }
    const auto once = preprocess(s);
    CHECK(clamp_sentinels(clamp_sentinels(s)) == clamp_sentinels(s));
    CHECK(interpolate_gaps(once) == once);
    for (const auto& r : once.readings) {
      if (r.is_value()) {
        CHECK(r.value >= 40.0);
        CHECK(r.value <= 400.0);
      }
    }
  }
}

TEST_CASE("normalizer") {
  const Normalizer n;
  CHECK(n.normalize(40) == 0.0);
  CHECK(n.normalize(400) == 1.0);
  CHECK(n.normalize(220) == 0.5);
  Rng rng(2);
  for (int i = 0; i < 10000; ++i) {
    const double v = rng.uniform(40, 400);
    REQUIRE(std::abs(n.denormalize(n.normalize(v)) - v) <= 1e-9 * v);
  }
}

TEST_CASE("window_samples counts") {
  const WindowConfig cfg;
  CHECK(window_samples(from_values(std::vector<double>(30, 120)), cfg).size() == 1);
  CHECK(window_samples(from_values(std::vector<double>(29, 120)), cfg).size() == 0);

  std::vector<double> v(100, 150);
  for (int i = 45; i < 52; ++i) v[i] = -1;
  const auto s = window_samples(from_values(v), cfg);
  // left side: readings 0..44 -> ends 23..38; right side: readings 52..99 -> ends 75..93
  CHECK(s.size() == (38 - 23 + 1) + (93 - 75 + 1));
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto smp = s[i];
    CHECK(smp.x.size() == 24);
    CHECK(smp.y_raw == 150);
    for (double x : smp.x) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
  }
}

TEST_CASE("window_samples matches a brute-force scanner on random gap patterns") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v;
    const int n = 40 + static_cast<int>(rng.below(400));
    int i = 0;
    while (i < n) {
      if (rng.uniform() < 0.05) {
        const int len = 1 + static_cast<int>(rng.below(10));
        for (int k = 0; k < len && i < n; ++k, ++i) v.push_back(-1);
      } else {
        v.push_back(std::round(rng.uniform(40, 400)));
        ++i;
      }
    }
    const auto s = preprocess(from_values(v));
    const WindowConfig cfg{1 + static_cast<int>(rng.below(30)), 1 + static_cast<int>(rng.below(8))};
    REQUIRE(window_samples(s, cfg).size() == brute_force_windows(s, cfg.wl, cfg.ph));
  }
}

TEST_CASE("window target and inputs") {
  std::vector<double> v;
  for (int i = 0; i < 31; ++i) v.push_back(40 + 10 * i);
  const auto s = window_samples(from_values(v), WindowConfig{24, 6});
  REQUIRE(s.size() == 2);
  CHECK(s[0].y_raw == 40 + 10 * 29);
  CHECK(s[0].t == 23 * 300);
  CHECK(s[1].x[0] == doctest::Approx(10.0 / 360.0));
}

TEST_CASE("temporal k-fold plan") {
  const auto s = from_values(std::vector<double>(6000, 120));
  const auto plan = temporal_kfold(s, 5);
  REQUIRE(plan.folds.size() == 5);
  CHECK(plan.folds[0].train.begin == 0);
  CHECK(plan.folds[0].train.end == 1000 * 300);
  CHECK(plan.folds[0].test.begin == 1000 * 300);
  CHECK(plan.folds[0].test.end == 2000 * 300);
  CHECK(plan.folds[4].train.end == 5000 * 300);
  CHECK(plan.folds[4].test.begin == 5000 * 300);
  CHECK(plan.folds[4].test.end == 6000 * 300);

  // test ranges tile segments 2..6 exactly once
  for (int i = 0; i < 5; ++i) {
    CHECK(plan.folds[i].test.begin == plan.folds[i].train.end);
    if (i > 0) CHECK(plan.folds[i].test.begin == plan.folds[i - 1].test.end);
  }

  const WindowConfig cfg;
  const auto samples = window_samples(s, cfg);
  for (const auto& f : plan.folds) {
    const auto split = split_fold(samples, f, cfg);
    REQUIRE_FALSE(split.train.empty());
    REQUIRE_FALSE(split.test.empty());
    std::int64_t max_train = 0;
    for (auto t : split.train.timestamps()) max_train = std::max(max_train, t + 6 * 300);
    std::int64_t min_test = split.test.timestamps()[0] - 23 * 300;
    for (auto t : split.test.timestamps()) min_test = std::min(min_test, t - 23 * 300);
    CHECK(max_train < min_test);
  }

  CHECK_THROWS_AS(temporal_kfold(from_values(std::vector<double>(100, 120)), 5), SeriesTooShort);
}

TEST_CASE("csv ingestion") {
  {
    std::istringstream in("p1,0,Low\np1,300,150\n");
    const auto c = parse_csv(in);
    REQUIRE(c.size() == 1);
    CHECK(c[0].patient_id == "p1");
    REQUIRE(c[0].size() == 2);
    CHECK(c[0].readings[0].kind == ReadingKind::Low);
    CHECK(c[0].readings[1] == GlucoseReading::observed(300, 150));
  }
  {
    std::istringstream in("patient_id,timestamp_s,glucose\np1,0,100\np1,300,abc\n");
    try {
      parse_csv(in);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.row() == 3);
      CHECK(std::string(e.what()).find("abc") != std::string::npos);
    }
  }
  {
    std::istringstream in("p1,0,100\np1,300,110\np1,900,High\n");
    const auto c = parse_csv(in);
    REQUIRE(c[0].size() == 4);
    CHECK(c[0].readings[2].is_missing());
    CHECK(c[0].readings[2].timestamp == 600);
    CHECK(c[0].readings[3].kind == ReadingKind::High);
  }
  {
    std::istringstream in("p1,300,100\np1,0,110\n");
    CHECK_THROWS_AS(parse_csv(in), NonMonotonicTimestamps);
  }
  {
    std::istringstream in("p1,301,100\n");
    CHECK_THROWS_AS(parse_csv(in), ParseError);
  }
  {
    std::istringstream in("p1,0,100,7\n");
    CHECK_THROWS_AS(parse_csv(in), ParseError);
  }
}

TEST_CASE("synthetic cohort calibration, determinism and csv round trip") {
  SyntheticCohortSpec spec;  // 20 patients, 30 days, seed 7, 2.8% / 38.5%
  const auto a = generate_synthetic_cohort(spec);
  const auto b = generate_synthetic_cohort(spec);
  REQUIRE(a.series.size() == 20);
  CHECK(a.series == b.series);
  CHECK(std::abs(a.audit.median_hypo_pct - 2.8) <= 1.0);
  CHECK(std::abs(a.audit.median_hyper_pct - 38.5) <= 5.0);
  CHECK(a.series[0].size() == 30u * 288u);

  std::size_t missing = 0, total = 0;
  for (const auto& s : a.series) {
    for (const auto& r : s.readings) missing += r.is_missing();
    total += s.size();
  }
  const double frac = double(missing) / double(total);
  CHECK(frac > 0.015);
  CHECK(frac < 0.03);

  auto other = spec;
  other.rng_seed = 8;
  CHECK_FALSE(generate_synthetic_cohort(other).series == a.series);

  std::stringstream io;
  write_csv(io, a.series);
  const auto back = parse_csv(io);
  REQUIRE(back.size() == a.series.size());
  for (std::size_t p = 0; p < back.size(); ++p) {
    // grid completion only spans first..last observed row
    const auto& orig = a.series[p].readings;
    std::size_t first = 0;
    while (orig[first].is_missing()) ++first;
    CHECK(back[p].readings.front() == orig[first]);
    CHECK(back[p].patient_id == a.series[p].patient_id);
  }
}

TEST_CASE("synthetic cohort without hypoglycemia target") {
  SyntheticCohortSpec spec;
  spec.n_patients = 6;
  spec.days_per_patient = 10;
  spec.target_hypo_fraction = 0.0;
  const auto c = generate_synthetic_cohort(spec);
  CHECK(c.audit.median_hypo_pct < 0.5);
}

TEST_CASE("infeasible synthetic targets") {
  SyntheticCohortSpec spec;
  spec.n_patients = 4;
  spec.days_per_patient = 5;
  spec.target_hypo_fraction = 0.01;
  spec.target_hyper_fraction = 0.98;
  CHECK_THROWS_AS(generate_synthetic_cohort(spec), InfeasibleSpec);

  spec.target_hyper_fraction = 0.995;
  CHECK_THROWS_AS(generate_synthetic_cohort(spec), ConfigError);
}
