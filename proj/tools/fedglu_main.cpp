#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fedglu/commands.hpp"
#include "fedglu/errors.hpp"

using namespace fedglu;

int main(int argc, char** argv) {
  CLI::App app{"Glucose forecasting with the hypo/hyper loss: local, central and federated training"};
  app.require_subcommand(1);

  cgm::SyntheticCohortSpec spec;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write a seeded synthetic cohort as CSV");
  synth->add_option("--patients", spec.n_patients, "Number of patients")->capture_default_str();
  synth->add_option("--days", spec.days_per_patient, "Days per patient")->capture_default_str();
  synth->add_option("--hypo", spec.target_hypo_fraction, "Target median fraction below 70 mg/dL")
      ->capture_default_str();
  synth->add_option("--hyper", spec.target_hyper_fraction, "Target median fraction above 180 mg/dL")
      ->capture_default_str();
  synth->add_option("--seed", spec.rng_seed, "Generator seed")->capture_default_str();
  synth->add_option("--missing", spec.missing_fraction, "Fraction of missing readings")->capture_default_str();
  synth->add_option("--out", synth_out, "Output CSV")->required();

  std::string run_config;
  std::string run_output;
  auto* run = app.add_subcommand("run", "Run the regimes named in a config file");
  run->add_option("config", run_config, "Config JSON")->required();
  run->add_option("--output-dir", run_output, "Override output_dir from the config");

  std::string sweep_config;
  std::vector<double> sweep_alphas;
  std::string sweep_csv;
  auto* sweep = app.add_subcommand("alpha-sweep", "Train one HH model per alpha and compare with MSE");
  sweep->add_option("config", sweep_config, "Config JSON")->required();
  sweep->add_option("--alphas", sweep_alphas, "Alpha grid (default: the config's grid)")->delimiter(',');
  sweep->add_option("--csv", sweep_csv, "Write the table as CSV");

  std::string report_dir;
  bool verify = false;
  auto* rep = app.add_subcommand("report", "Summarize a finished run");
  rep->add_option("run_dir", report_dir, "Run directory")->required();
  rep->add_flag("--verify", verify, "Check every file against the manifest hashes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) {
      cli::cmd_synth(spec, synth_out, std::cout);
    } else if (*run) {
      std::optional<std::filesystem::path> out;
      if (!run_output.empty()) out = run_output;
      cli::cmd_run(run_config, out, std::cout);
    } else if (*sweep) {
      std::optional<std::vector<double>> alphas;
      if (!sweep_alphas.empty()) alphas = sweep_alphas;
      std::optional<std::filesystem::path> csv;
      if (!sweep_csv.empty()) csv = sweep_csv;
      cli::cmd_alpha_sweep(sweep_config, alphas, csv, std::cout);
    } else if (*rep) {
      cli::cmd_report(report_dir, verify, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::exit_code(e);
  }
  return 0;
}
