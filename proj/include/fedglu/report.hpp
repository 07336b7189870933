#pragma once

#include <iosfwd>
#include <span>
#include <string>

#include "json.hpp"

#include "fedglu/eval.hpp"
#include "fedglu/experiment.hpp"

namespace fedglu::report {

/// Every metric of a run nested as regime -> fold -> patient, plus cohort
/// summaries and paired regime comparisons. Contains nothing that varies
/// between identical runs (no timings, no paths).
nlohmann::json build_report(const exp::ExperimentResult& result, const exp::Cohort& cohort);

/// Flat rows `patient,regime,fold,metric,value` taken from the report.
void write_report_csv(std::ostream& out, const nlohmann::json& report);

/// Human-readable summary; every number is read from the report as is.
void render_report(std::ostream& out, const nlohmann::json& report);

nlohmann::json ledger_json(const fed::RoundLedger& ledger);

nlohmann::json sweep_json(const exp::AlphaSweepResult& sweep);
void write_sweep_csv(std::ostream& out, const exp::AlphaSweepResult& sweep);
void render_sweep(std::ostream& out, const exp::AlphaSweepResult& sweep);

/// Clarke error grid scatter with the zone boundary lines.
void write_cega_svg(std::ostream& out, std::span<const eval::PredictionPair> pairs, const std::string& title);

/// Shortest round-trip text for a double.
std::string format_double(double v);

}  // namespace fedglu::report
