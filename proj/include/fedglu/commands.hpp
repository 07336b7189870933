#pragma once

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "fedglu/config.hpp"
#include "fedglu/experiment.hpp"
#include "fedglu/synthetic.hpp"

namespace fedglu::cli {

/// Writes a synthetic cohort CSV and prints the generator audit.
void cmd_synth(const cgm::SyntheticCohortSpec& spec, const std::filesystem::path& out_csv, std::ostream& log);

/// Runs an experiment and writes report.json, report.csv, per-fold
/// ledger.json and rounds/round_<t>.json, optional cega.svg and
/// manifest.json into cfg.output_dir. Returns the run directory.
std::filesystem::path run_to_dir(const config::RunConfig& cfg, std::ostream& log);

/// `run`: load the config (optionally redirecting the output) and execute.
std::filesystem::path cmd_run(const std::filesystem::path& config_path,
                              const std::optional<std::filesystem::path>& output_dir, std::ostream& log);

/// `alpha-sweep`: prints the table and writes it as CSV when `out_csv` is set.
/// `alphas` defaults to the config's alpha grid.
exp::AlphaSweepResult cmd_alpha_sweep(const std::filesystem::path& config_path,
                                      const std::optional<std::vector<double>>& alphas,
                                      const std::optional<std::filesystem::path>& out_csv, std::ostream& out);

/// `report`: renders report.json; with `verify` also re-checks every hash
/// in the manifest and throws VerificationFailed on a mismatch.
void cmd_report(const std::filesystem::path& run_dir, bool verify, std::ostream& out);

/// 2 for configuration errors, 3 for data errors, 4 for runtime failures
/// and anything unexpected.
int exit_code(const std::exception& e);

}  // namespace fedglu::cli
