#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fedglu::cgm {

inline constexpr std::int64_t kIntervalSeconds = 300;
inline constexpr double kGlucoseFloor = 40.0;
inline constexpr double kGlucoseCeiling = 400.0;

enum class ReadingKind : std::uint8_t { Value, Low, High, Missing };

struct GlucoseReading {
  std::int64_t timestamp = 0;
  ReadingKind kind = ReadingKind::Missing;
  double value = 0.0;  // mg/dL, meaningful only for ReadingKind::Value

  static GlucoseReading observed(std::int64_t ts, double mg_dl) { return {ts, ReadingKind::Value, mg_dl}; }
  static GlucoseReading low(std::int64_t ts) { return {ts, ReadingKind::Low, 0.0}; }
  static GlucoseReading high(std::int64_t ts) { return {ts, ReadingKind::High, 0.0}; }
  static GlucoseReading missing(std::int64_t ts) { return {ts, ReadingKind::Missing, 0.0}; }

  bool is_value() const noexcept { return kind == ReadingKind::Value; }
  bool is_missing() const noexcept { return kind == ReadingKind::Missing; }

  friend bool operator==(const GlucoseReading&, const GlucoseReading&) = default;
};

struct GlucoseSeries {
  std::string patient_id;
  std::int64_t interval_s = kIntervalSeconds;
  std::vector<GlucoseReading> readings;

  std::size_t size() const noexcept { return readings.size(); }
  friend bool operator==(const GlucoseSeries&, const GlucoseSeries&) = default;
};

struct WindowConfig {
  int wl = 24;  // past readings fed to the model
  int ph = 6;   // readings ahead of the window end
  void validate() const;
};

/// Fixed affine map [lo, hi] mg/dL -> [0, 1]. Shared by every client so
/// averaged weights mean the same thing everywhere.
struct Normalizer {
  double lo = kGlucoseFloor;
  double hi = kGlucoseCeiling;

  double normalize(double mg_dl) const noexcept { return (mg_dl - lo) / (hi - lo); }
  double denormalize(double unit) const noexcept { return lo + unit * (hi - lo); }
  double scale() const noexcept { return hi - lo; }
};

/// Borrowed view of one supervised window.
struct SampleView {
  std::span<const double> x;
  double y_raw;
  std::int64_t t;
};

/// Supervised windows stored contiguously: `x` is row-major with `wl`
/// normalized inputs per sample, `y_raw` is the target in mg/dL and `t` the
/// timestamp of the window's last reading.
class SampleSet {
 public:
  SampleSet() = default;
  explicit SampleSet(int wl) : wl_(wl) {}

  int wl() const noexcept { return wl_; }
  std::size_t size() const noexcept { return y_raw_.size(); }
  bool empty() const noexcept { return y_raw_.empty(); }

  void push_back(std::span<const double> x, double y_raw, std::int64_t t);
  void append(const SampleSet& other);
  void reserve(std::size_t n);

  SampleView operator[](std::size_t i) const {
    return {std::span<const double>(x_).subspan(i * wl_, wl_), y_raw_[i], t_[i]};
  }
  std::span<const double> inputs() const noexcept { return x_; }
  std::span<const double> targets() const noexcept { return y_raw_; }
  std::span<const std::int64_t> timestamps() const noexcept { return t_; }

 private:
  int wl_ = 0;
  std::vector<double> x_;
  std::vector<double> y_raw_;
  std::vector<std::int64_t> t_;
};

/// Half-open timestamp interval [begin, end).
struct TimeRange {
  std::int64_t begin = 0;
  std::int64_t end = 0;
  bool contains(std::int64_t ts) const noexcept { return ts >= begin && ts < end; }
};

struct Fold {
  TimeRange train;
  TimeRange test;
};

struct FoldPlan {
  int k = 0;
  std::vector<Fold> folds;
};

/// LOW -> 40, HIGH -> 400, numeric values clipped into [40, 400].
GlucoseSeries clamp_sentinels(GlucoseSeries series);

/// Linearly fills MISSING runs shorter than `max_gap` that are bracketed by
/// observed values on both sides.
GlucoseSeries interpolate_gaps(GlucoseSeries series, int max_gap = 6);

/// clamp_sentinels followed by interpolate_gaps.
GlucoseSeries preprocess(GlucoseSeries series, int max_gap = 6);

/// One sample per fully observed window+target. Expects preprocessed input.
SampleSet window_samples(const GlucoseSeries& series, const WindowConfig& cfg, const Normalizer& norm = {});

/// Expanding-window temporal plan: the timeline is cut into k+1 equal
/// contiguous segments and fold i trains on segments 1..i, tests on i+1.
/// Throws SeriesTooShort when a segment cannot hold a single window.
FoldPlan temporal_kfold(const GlucoseSeries& series, int k = 5, const WindowConfig& cfg = {});

struct SplitSamples {
  SampleSet train;
  SampleSet test;
};

/// Assigns samples whose whole span (inputs and target) falls inside the
/// fold's train or test range; straddling samples are dropped.
SplitSamples split_fold(const SampleSet& samples, const Fold& fold, const WindowConfig& cfg,
                        std::int64_t interval_s = kIntervalSeconds);

/// Percentage of readings below 70 and above 180 mg/dL among non-missing
/// readings (LOW counts as hypo, HIGH as hyper).
struct ExcursionProfile {
  double hypo_pct = 0.0;
  double hyper_pct = 0.0;
  std::size_t observed = 0;
};
ExcursionProfile excursion_profile(const GlucoseSeries& series);

std::vector<GlucoseSeries> load_csv(const std::filesystem::path& path);
std::vector<GlucoseSeries> parse_csv(std::istream& in);

/// Writes the ingestion schema. MISSING readings are omitted so that a
/// reload reproduces them through grid completion.
void write_csv(std::ostream& out, std::span<const GlucoseSeries> cohort);
void save_csv(const std::filesystem::path& path, std::span<const GlucoseSeries> cohort);

}  // namespace fedglu::cgm
