#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedglu/cgm_data.hpp"
#include "fedglu/config.hpp"
#include "fedglu/eval.hpp"
#include "fedglu/federated.hpp"
#include "fedglu/synthetic.hpp"

namespace fedglu::exp {

struct PatientData {
  std::string patient_id;
  cgm::ExcursionProfile profile;  // of the raw series
  cgm::SampleSet samples;         // windows of the preprocessed series
  cgm::FoldPlan plan;
};

struct Cohort {
  std::vector<PatientData> patients;  // ascending patient id
  std::optional<cgm::CohortAudit> audit;
};

/// Preprocesses, windows and fold-plans every series.
Cohort build_cohort(std::vector<cgm::GlucoseSeries> series, const config::RunConfig& cfg);
/// Reads the CSV or generates the synthetic cohort named by the config.
Cohort load_cohort(const config::RunConfig& cfg);

struct PatientResult {
  std::string patient_id;
  std::size_t n_train = 0;
  std::vector<double> reference;   // test targets, mg/dL
  std::vector<double> prediction;  // clipped to [40, 400]
  std::size_t clipped = 0;
  eval::RegionRmse rmse;
  eval::ZoneBreakdown cega;
  std::optional<double> alpha;               // HH regimes
  std::optional<fed::AlphaSelection> selection;  // when chosen per patient
};

/// One alpha of a cohort-level HH sweep.
struct SweepCandidate {
  double alpha = 0.0;
  std::optional<double> train_score;  // pooled train hypo + hyper RMSE
  eval::RegionRmse test_pooled;
  double ab_mean = 0.0;   // cohort mean of per-patient A+B %
  double cde_mean = 0.0;  // cohort mean of per-patient C+D+E %
};

struct RegimeFold {
  std::string regime;
  int fold = 0;
  std::vector<PatientResult> patients;  // ascending patient id
  eval::RegionRmse pooled;              // over every test pair of the fold
  std::optional<fed::AlphaSelection> cohort_selection;  // central_hh
  std::vector<SweepCandidate> sweep;                    // central_hh
};

struct ExperimentResult {
  std::vector<RegimeFold> runs;  // fold-major, regimes in execution order
  std::map<int, fed::RoundLedger> ledgers;
  std::map<int, std::vector<std::string>> skipped;  // fold -> patients without train or test windows
  std::vector<std::pair<std::string, double>> stage_seconds;

  const RegimeFold* find(const std::string& regime, int fold) const;
};

struct RunHooks {
  std::function<void(const std::string&)> log;
  std::function<void(int fold, const fed::RoundRecord&, std::span<const double> global)> on_round;
};

/// Runs every configured regime on every configured fold.
ExperimentResult run_experiment(const config::RunConfig& cfg, const Cohort& cohort, const RunHooks& hooks = {});

/// One row of an alpha sweep (improvements of HH over MSE, in percent).
struct SweepRow {
  double alpha = 0.0;
  std::optional<double> hypo_improvement_pct;
  std::optional<double> hyper_improvement_pct;
  double ab_pct = 0.0;
  double cde_pct = 0.0;
};

/// Rows of one fold: pooled test RMSE of each candidate against the MSE
/// regime of the same fold.
std::vector<SweepRow> sweep_rows(const RegimeFold& mse, const RegimeFold& hh);

struct AlphaSweepResult {
  std::string mode;  // "central" or "fedglu"
  std::vector<SweepRow> rows;  // averaged over folds, in grid order
  std::optional<double> rho_hypo;
  std::optional<double> p_hypo;
  std::optional<double> rho_hyper;
  std::optional<double> p_hyper;
};

/// Trains one HH model per alpha (central regime when configured, else
/// FedGlu fine-tuning) and compares each with its MSE counterpart.
AlphaSweepResult alpha_sweep(const config::RunConfig& cfg, const Cohort& cohort, std::span<const double> alphas,
                             const RunHooks& hooks = {});

}  // namespace fedglu::exp
