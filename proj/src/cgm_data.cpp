#include "fedglu/cgm_data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "fedglu/errors.hpp"

namespace fedglu::cgm {

void WindowConfig::validate() const {
  if (wl < 1) throw ConfigError("window.wl must be >= 1");
  if (ph < 1) throw ConfigError("window.ph must be >= 1");
}

void SampleSet::push_back(std::span<const double> x, double y_raw, std::int64_t t) {
  if (static_cast<int>(x.size()) != wl_) {
    throw DimensionMismatch("sample has " + std::to_string(x.size()) + " inputs, expected " + std::to_string(wl_));
  }
  x_.insert(x_.end(), x.begin(), x.end());
  y_raw_.push_back(y_raw);
  t_.push_back(t);
}

void SampleSet::append(const SampleSet& other) {
  if (other.empty()) return;
  if (empty() && x_.empty()) wl_ = other.wl_;
  if (other.wl_ != wl_) throw DimensionMismatch("cannot append samples with a different window length");
  x_.insert(x_.end(), other.x_.begin(), other.x_.end());
  y_raw_.insert(y_raw_.end(), other.y_raw_.begin(), other.y_raw_.end());
  t_.insert(t_.end(), other.t_.begin(), other.t_.end());
}

void SampleSet::reserve(std::size_t n) {
  x_.reserve(n * static_cast<std::size_t>(wl_));
  y_raw_.reserve(n);
  t_.reserve(n);
}

GlucoseSeries clamp_sentinels(GlucoseSeries series) {
  for (auto& r : series.readings) {
    switch (r.kind) {
      case ReadingKind::Low:
        r = GlucoseReading::observed(r.timestamp, kGlucoseFloor);
        break;
      case ReadingKind::High:
        r = GlucoseReading::observed(r.timestamp, kGlucoseCeiling);
        break;
      case ReadingKind::Value:
        r.value = std::clamp(r.value, kGlucoseFloor, kGlucoseCeiling);
        break;
      case ReadingKind::Missing:
        break;
    }
  }
  return series;
}

GlucoseSeries interpolate_gaps(GlucoseSeries series, int max_gap) {
  auto& rs = series.readings;
  const std::size_t n = rs.size();
  std::size_t i = 0;
  while (i < n) {
    if (!rs[i].is_missing()) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && rs[j].is_missing()) ++j;
    const std::size_t run = j - i;
    // Runs touching either end have no bracket and stay missing.
    if (i > 0 && j < n && run < static_cast<std::size_t>(max_gap) && rs[i - 1].is_value() && rs[j].is_value()) {
      const double left = rs[i - 1].value;
      const double right = rs[j].value;
      const double span = static_cast<double>(run + 1);
      for (std::size_t m = i; m < j; ++m) {
        const double frac = static_cast<double>(m - i + 1) / span;
        rs[m] = GlucoseReading::observed(rs[m].timestamp, left + (right - left) * frac);
      }
    }
    i = j;
  }
  return series;
}

GlucoseSeries preprocess(GlucoseSeries series, int max_gap) {
  return interpolate_gaps(clamp_sentinels(std::move(series)), max_gap);
}

SampleSet window_samples(const GlucoseSeries& series, const WindowConfig& cfg, const Normalizer& norm) {
  cfg.validate();
  const auto& rs = series.readings;
  const std::size_t n = rs.size();
  const auto wl = static_cast<std::size_t>(cfg.wl);
  const auto ph = static_cast<std::size_t>(cfg.ph);
  SampleSet out(cfg.wl);
  if (n < wl + ph) return out;

  // run[i] = length of the observed stretch ending at i
  std::vector<std::size_t> run(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    run[i] = rs[i].is_value() ? (i > 0 ? run[i - 1] + 1 : 1) : 0;
  }
  std::vector<double> x(wl);
  for (std::size_t end = wl - 1; end + ph < n; ++end) {
    if (run[end] < wl || !rs[end + ph].is_value()) continue;
    for (std::size_t k = 0; k < wl; ++k) x[k] = norm.normalize(rs[end + 1 - wl + k].value);
    out.push_back(x, rs[end + ph].value, rs[end].timestamp);
  }
  return out;
}

FoldPlan temporal_kfold(const GlucoseSeries& series, int k, const WindowConfig& cfg) {
  if (k < 1) throw ConfigError("folds.k must be >= 1");
  cfg.validate();
  const auto n = static_cast<std::int64_t>(series.readings.size());
  const std::int64_t segments = k + 1;
  const std::int64_t need = cfg.wl + cfg.ph;
  if (n == 0) throw SeriesTooShort("series '" + series.patient_id + "' is empty");
  const std::int64_t t0 = series.readings.front().timestamp;

  std::vector<std::int64_t> cut(static_cast<std::size_t>(segments + 1));
  for (std::int64_t j = 0; j <= segments; ++j) cut[static_cast<std::size_t>(j)] = n * j / segments;
  for (std::int64_t j = 0; j < segments; ++j) {
    if (cut[static_cast<std::size_t>(j + 1)] - cut[static_cast<std::size_t>(j)] < need) {
      throw SeriesTooShort("series '" + series.patient_id + "' has " + std::to_string(n) +
                           " readings; each of " + std::to_string(segments) + " segments needs " +
                           std::to_string(need));
    }
  }
  auto at = [&](std::int64_t idx) { return t0 + idx * series.interval_s; };

  FoldPlan plan;
  plan.k = k;
  for (int i = 1; i <= k; ++i) {
    Fold f;
    f.train = {at(0), at(cut[static_cast<std::size_t>(i)])};
    f.test = {at(cut[static_cast<std::size_t>(i)]), at(cut[static_cast<std::size_t>(i + 1)])};
    plan.folds.push_back(f);
  }
  return plan;
}

SplitSamples split_fold(const SampleSet& samples, const Fold& fold, const WindowConfig& cfg,
                        std::int64_t interval_s) {
  SplitSamples out{SampleSet(samples.wl()), SampleSet(samples.wl())};
  const std::int64_t back = static_cast<std::int64_t>(cfg.wl - 1) * interval_s;
  const std::int64_t ahead = static_cast<std::int64_t>(cfg.ph) * interval_s;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto s = samples[i];
    const std::int64_t first = s.t - back;
    const std::int64_t target = s.t + ahead;
    if (fold.train.contains(first) && fold.train.contains(target)) {
      out.train.push_back(s.x, s.y_raw, s.t);
    } else if (fold.test.contains(first) && fold.test.contains(target)) {
      out.test.push_back(s.x, s.y_raw, s.t);
    }
  }
  return out;
}

ExcursionProfile excursion_profile(const GlucoseSeries& series) {
  std::size_t hypo = 0;
  std::size_t hyper = 0;
  std::size_t seen = 0;
  for (const auto& r : series.readings) {
    switch (r.kind) {
      case ReadingKind::Missing:
        continue;
      case ReadingKind::Low:
        ++hypo;
        break;
      case ReadingKind::High:
        ++hyper;
        break;
      case ReadingKind::Value:
        if (r.value < 70.0) ++hypo;
        if (r.value > 180.0) ++hyper;
        break;
    }
    ++seen;
  }
  ExcursionProfile p;
  p.observed = seen;
  if (seen > 0) {
    p.hypo_pct = 100.0 * static_cast<double>(hypo) / static_cast<double>(seen);
    p.hyper_pct = 100.0 * static_cast<double>(hyper) / static_cast<double>(seen);
  }
  return p;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i]))) {
      return false;
    }
  }
  return true;
}

struct RawRow {
  std::int64_t ts;
  GlucoseReading reading;
};

}  // namespace

std::vector<GlucoseSeries> parse_csv(std::istream& in) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<RawRow>> rows;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    std::string_view text = trim(line);
    if (text.empty()) continue;
    if (row == 1 && text == "patient_id,timestamp_s,glucose") continue;

    std::string_view fields[3];
    std::size_t nfields = 0;
    while (true) {
      const auto comma = text.find(',');
      if (nfields == 3) throw ParseError(row, "expected 3 fields");
      fields[nfields++] = trim(text.substr(0, comma));
      if (comma == std::string_view::npos) break;
      text.remove_prefix(comma + 1);
    }
    if (nfields != 3) throw ParseError(row, "expected 3 fields, found " + std::to_string(nfields));
    if (fields[0].empty()) throw ParseError(row, "empty patient_id");

    std::int64_t ts = 0;
    {
      const auto f = fields[1];
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), ts);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw ParseError(row, "invalid timestamp_s '" + std::string(f) + "'");
      }
      if (ts % kIntervalSeconds != 0) {
        throw ParseError(row, "timestamp_s " + std::to_string(ts) + " is not a multiple of 300");
      }
    }

    GlucoseReading reading;
    const auto g = fields[2];
    if (iequals(g, "low")) {
      reading = GlucoseReading::low(ts);
    } else if (iequals(g, "high")) {
      reading = GlucoseReading::high(ts);
    } else {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(g.data(), g.data() + g.size(), v);
      if (g.empty() || ec != std::errc() || ptr != g.data() + g.size() || !std::isfinite(v)) {
        throw ParseError(row, "invalid glucose value '" + std::string(g) + "'");
      }
      reading = GlucoseReading::observed(ts, v);
    }

    std::string id(fields[0]);
    auto [it, inserted] = rows.try_emplace(id);
    if (inserted) order.push_back(id);
    if (!it->second.empty() && it->second.back().ts >= ts) {
      throw NonMonotonicTimestamps("row " + std::to_string(row) + ": timestamp " + std::to_string(ts) +
                                   " for patient '" + id + "' does not increase");
    }
    it->second.push_back({ts, reading});
  }

  std::vector<GlucoseSeries> out;
  out.reserve(order.size());
  for (const auto& id : order) {
    const auto& raw = rows.at(id);
    GlucoseSeries s;
    s.patient_id = id;
    const std::int64_t t0 = raw.front().ts;
    const std::int64_t t1 = raw.back().ts;
    s.readings.reserve(static_cast<std::size_t>((t1 - t0) / kIntervalSeconds + 1));
    std::size_t next = 0;
    for (std::int64_t t = t0; t <= t1; t += kIntervalSeconds) {
      if (raw[next].ts == t) {
        s.readings.push_back(raw[next].reading);
        ++next;
      } else {
        s.readings.push_back(GlucoseReading::missing(t));
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<GlucoseSeries> load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return parse_csv(in);
}

void write_csv(std::ostream& out, std::span<const GlucoseSeries> cohort) {
  out << "patient_id,timestamp_s,glucose\n";
  char buf[64];
  for (const auto& s : cohort) {
    for (const auto& r : s.readings) {
      switch (r.kind) {
        case ReadingKind::Missing:
          continue;
        case ReadingKind::Low:
          out << s.patient_id << ',' << r.timestamp << ",Low\n";
          break;
        case ReadingKind::High:
          out << s.patient_id << ',' << r.timestamp << ",High\n";
          break;
        case ReadingKind::Value: {
          const auto res = std::to_chars(buf, buf + sizeof(buf), r.value);
          out << s.patient_id << ',' << r.timestamp << ',' << std::string_view(buf, res.ptr) << '\n';
          break;
        }
      }
    }
  }
}

void save_csv(const std::filesystem::path& path, std::span<const GlucoseSeries> cohort) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write '" + path.string() + "'");
  write_csv(out, cohort);
  if (!out) throw RuntimeFailure("failed writing '" + path.string() + "'");
}

}  // namespace fedglu::cgm
