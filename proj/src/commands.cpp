#include "fedglu/commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <regex>
#include <sstream>

#include "fedglu/checkpoint.hpp"
#include "fedglu/errors.hpp"
#include "fedglu/manifest.hpp"
#include "fedglu/report.hpp"

namespace fedglu::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << text;
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// Removes artifacts of an earlier run so the manifest only lists fresh files.
void clear_previous(const fs::path& dir) {
  if (!fs::exists(dir)) return;
  for (const char* name : {"report.json", "report.csv", "cega.svg", manifest::kManifestName}) fs::remove(dir / name);
  static const std::regex fold_dir("fold_[0-9]+");
  static const std::regex round_file("round_[0-9]+\\.json");
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory() || !std::regex_match(entry.path().filename().string(), fold_dir)) continue;
    fs::remove(entry.path() / "ledger.json");
    const auto rounds = entry.path() / "rounds";
    if (!fs::is_directory(rounds)) continue;
    for (const auto& f : fs::directory_iterator(rounds)) {
      if (std::regex_match(f.path().filename().string(), round_file)) fs::remove(f.path());
    }
  }
}

const char* svg_regime(const exp::ExperimentResult& res) {
  for (const char* r : {config::kFedGlu, config::kCentralHh, config::kLocalHh, config::kFedGlobal,
                        config::kCentralMse, config::kLocalMse}) {
    for (const auto& rf : res.runs) {
      if (rf.regime == r) return r;
    }
  }
  return nullptr;
}

}  // namespace

void cmd_synth(const cgm::SyntheticCohortSpec& spec, const fs::path& out_csv, std::ostream& log) {
  const auto cohort = cgm::generate_synthetic_cohort(spec);
  if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
  cgm::save_csv(out_csv, cohort.series);
  const auto& a = cohort.audit;
  log << "patient      hypo%   hyper%\n";
  for (std::size_t i = 0; i < cohort.series.size(); ++i) {
    log << cohort.series[i].patient_id << "    " << pct(a.per_patient[i].hypo_pct) << "    "
        << pct(a.per_patient[i].hyper_pct) << '\n';
  }
  log << "median hypo% " << pct(a.median_hypo_pct) << ", median hyper% " << pct(a.median_hyper_pct) << '\n';
  log << "wrote " << cohort.series.size() << " patients to " << out_csv.string() << '\n';
}

fs::path run_to_dir(const config::RunConfig& cfg, std::ostream& log) {
  using Clock = std::chrono::steady_clock;
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  clear_previous(dir);

  std::vector<std::pair<std::string, double>> stages;
  auto t0 = Clock::now();
  const auto cohort = exp::load_cohort(cfg);
  stages.emplace_back("load_cohort", std::chrono::duration<double>(Clock::now() - t0).count());
  log << "cohort: " << cohort.patients.size() << " patients\n";
  if (cohort.audit) {
    log << "synthetic audit: median hypo% " << pct(cohort.audit->median_hypo_pct) << ", median hyper% "
        << pct(cohort.audit->median_hyper_pct) << '\n';
  }

  exp::RunHooks hooks;
  hooks.log = [&](const std::string& msg) { log << msg << '\n' << std::flush; };
  hooks.on_round = [&](int fold, const fed::RoundRecord& rec, std::span<const double> w) {
    if (rec.round % cfg.checkpoint_every != 0 && rec.round != cfg.federated.rounds) return;
    const auto path = dir / ("fold_" + std::to_string(fold)) / "rounds" / ("round_" + std::to_string(rec.round) + ".json");
    fs::create_directories(path.parent_path());
    nn::save_checkpoint(path, nn::MlpModel(nn::kGlucoseArchitecture, nn::ParamVector(w.begin(), w.end())));
  };
  const auto result = exp::run_experiment(cfg, cohort, hooks);
  stages.insert(stages.end(), result.stage_seconds.begin(), result.stage_seconds.end());

  t0 = Clock::now();
  const auto rep = report::build_report(result, cohort);
  write_text(dir / "report.json", rep.dump(2) + "\n");
  std::ostringstream csv;
  report::write_report_csv(csv, rep);
  write_text(dir / "report.csv", csv.str());
  for (const auto& [fold, ledger] : result.ledgers) {
    write_text(dir / ("fold_" + std::to_string(fold)) / "ledger.json", report::ledger_json(ledger).dump(2) + "\n");
  }
  if (cfg.cega_svg) {
    if (const char* regime = svg_regime(result)) {
      std::vector<eval::PredictionPair> pairs;
      for (const auto& rf : result.runs) {
        if (rf.regime != regime) continue;
        for (const auto& p : rf.patients) {
          for (std::size_t i = 0; i < p.reference.size(); ++i) pairs.push_back({p.reference[i], p.prediction[i]});
        }
      }
      std::ostringstream svg;
      report::write_cega_svg(svg, pairs, std::string("Clarke error grid: ") + regime);
      write_text(dir / "cega.svg", svg.str());
    }
  }
  stages.emplace_back("write_outputs", std::chrono::duration<double>(Clock::now() - t0).count());
  manifest::write_manifest(dir, manifest::build_manifest(dir, config::to_json(cfg), stages));
  log << "wrote " << dir.string() << '\n';
  return dir;
}

fs::path cmd_run(const fs::path& config_path, const std::optional<fs::path>& output_dir, std::ostream& log) {
  auto cfg = config::load_config(config_path);
  if (output_dir) cfg.output_dir = *output_dir;
  return run_to_dir(cfg, log);
}

exp::AlphaSweepResult cmd_alpha_sweep(const fs::path& config_path, const std::optional<std::vector<double>>& alphas,
                                      const std::optional<fs::path>& out_csv, std::ostream& out) {
  const auto cfg = config::load_config(config_path);
  const auto cohort = exp::load_cohort(cfg);
  const std::vector<double> grid = alphas ? *alphas : cfg.alpha_grid;
  exp::RunHooks hooks;
  hooks.log = [&](const std::string& msg) { out << msg << '\n' << std::flush; };
  const auto res = exp::alpha_sweep(cfg, cohort, grid, hooks);
  report::render_sweep(out, res);
  if (out_csv) {
    std::ostringstream csv;
    report::write_sweep_csv(csv, res);
    write_text(fs::absolute(*out_csv), csv.str());
  }
  return res;
}

void cmd_report(const fs::path& run_dir, bool verify, std::ostream& out) {
  std::ifstream in(run_dir / "report.json");
  if (!in) throw MissingArtifacts("no report.json in " + run_dir.string());
  json rep;
  try {
    rep = json::parse(in);
  } catch (const json::parse_error& e) {
    throw MissingArtifacts("report.json is not valid JSON: " + std::string(e.what()));
  }
  report::render_report(out, rep);
  if (!verify) return;
  const auto res = manifest::verify_manifest(run_dir);
  if (!res.ok()) {
    std::string msg = "manifest check failed:";
    for (const auto& p : res.problems) msg += "\n  " + p;
    throw VerificationFailed(msg);
  }
  out << "\nverify: " << res.checked << " files match the manifest\n";
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e)) return 3;
  return 4;
}

}  // namespace fedglu::cli
