#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "fedglu/commands.hpp"
#include "fedglu/config.hpp"
#include "fedglu/errors.hpp"
#include "fedglu/experiment.hpp"
#include "fedglu/manifest.hpp"
#include "fedglu/report.hpp"

using namespace fedglu;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json small_doc() {
  return json::parse(R"({
    "data": {"synthetic": {"patients": 2, "days": 6, "seed": 5}},
    "folds": {"k": 5, "use": [5]},
    "train": {"max_epochs": 2, "batch_size": 256},
    "federated": {"rounds": 2, "finetune_epochs": 2, "batch_size": 256, "checkpoint_every": 1},
    "loss": {"loss": "hh", "alpha_grid": [0.2, 0.8]},
    "regimes": ["local"],
    "seed": 3
  })");
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("fedglu_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void expect_config_error(const json& doc, const std::string& fragment) {
  try {
    config::parse_config(doc);
    FAIL("expected ConfigError mentioning " << fragment);
  } catch (const ConfigError& e) {
    CHECK_MESSAGE(std::string(e.what()).find(fragment) != std::string::npos, e.what());
  }
}

}  // namespace

TEST_CASE("config defaults and regime groups") {
  const auto cfg = config::parse_config(json::parse(R"({
    "data": {"synthetic": {}}, "regimes": ["local", "federated", "fedglu"]})"));
  CHECK(cfg.regimes == std::vector<std::string>{"local_mse", "local_hh", "fed_global", "fedglu"});
  CHECK(cfg.alpha_grid == fed::default_alpha_grid());
  CHECK(cfg.personal_alpha_grid == cfg.alpha_grid);
  CHECK(cfg.local_train.batch_size == 500);
  CHECK(cfg.local_train.max_epochs == 50);
  CHECK(cfg.local_train.patience == 10);
  CHECK(cfg.federated.rounds == 50);
  CHECK(cfg.federated.local_epochs == 1);
  CHECK(cfg.window.wl == 24);
  CHECK(cfg.window.ph == 6);
  CHECK(cfg.fold_list() == std::vector<int>{1, 2, 3, 4, 5});
  CHECK(cfg.data.synthetic->n_patients == 20);
}

TEST_CASE("central_train inherits from train") {
  auto doc = small_doc();
  doc["train"]["learning_rate"] = 0.002;
  doc["central_train"] = {{"max_epochs", 7}};
  const auto cfg = config::parse_config(doc);
  CHECK(cfg.central_train.max_epochs == 7);
  CHECK(cfg.central_train.learning_rate == 0.002);
  CHECK(cfg.central_train.batch_size == 256);
  CHECK(cfg.local_train.max_epochs == 2);
}

TEST_CASE("config validation names the offending field") {
  auto doc = small_doc();
  doc["train"]["max_epoch"] = 3;
  expect_config_error(doc, "train.max_epoch");

  doc = small_doc();
  doc["data"]["synthetic"]["colour"] = 1;
  expect_config_error(doc, "data.synthetic.colour");

  doc = small_doc();
  doc["extra"] = true;
  expect_config_error(doc, "'extra'");

  doc = small_doc();
  doc["train"]["batch_size"] = "big";
  expect_config_error(doc, "train.batch_size");

  doc = small_doc();
  doc["regimes"] = {"fedglu"};
  expect_config_error(doc, "fedglu");

  doc = small_doc();
  doc["regimes"] = {"nonsense"};
  expect_config_error(doc, "nonsense");

  doc = small_doc();
  doc["regimes"] = json::array();
  expect_config_error(doc, "regimes");

  doc = small_doc();
  doc["data"]["csv"] = "x.csv";
  expect_config_error(doc, "exactly one");

  doc = small_doc();
  doc["loss"] = {{"loss", "hh"}, {"alpha", 1.5}};
  expect_config_error(doc, "loss.alpha");

  doc = small_doc();
  doc["loss"] = {{"loss", "hh"}, {"alpha", 0.5}, {"alpha_grid", {0.1}}};
  expect_config_error(doc, "either");

  doc = small_doc();
  doc["loss"] = {{"loss", "mse"}};
  expect_config_error(doc, "HH regime");

  doc = small_doc();
  doc["folds"]["use"] = {6};
  expect_config_error(doc, "folds.use");

  doc = small_doc();
  doc["federated"]["rounds"] = -1;
  expect_config_error(doc, "rounds");
}

TEST_CASE("resolved config round-trips") {
  const auto cfg = config::parse_config(small_doc());
  const auto j = config::to_json(cfg);
  CHECK(config::to_json(config::parse_config(j)) == j);
}

TEST_CASE("local regimes produce one model per patient and fold") {
  auto cfg = config::parse_config(small_doc());
  const auto cohort = exp::load_cohort(cfg);
  REQUIRE(cohort.patients.size() == 2);
  const auto res = exp::run_experiment(cfg, cohort);
  for (const char* regime : {config::kLocalMse, config::kLocalHh}) {
    const auto* rf = res.find(regime, 5);
    REQUIRE(rf != nullptr);
    CHECK(rf->patients.size() == 2);
  }
  for (const auto& p : res.find(config::kLocalHh, 5)->patients) {
    REQUIRE(p.alpha.has_value());
    CHECK((*p.alpha == 0.2 || *p.alpha == 0.8 || *p.alpha == 0.5));
  }
  const auto rep = report::build_report(res, cohort);
  std::ostringstream csv;
  report::write_report_csv(csv, rep);
  std::set<std::string> seen;
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "patient,regime,fold,metric,value");
  while (std::getline(lines, line)) seen.insert(line.substr(0, line.find(',', line.find(',') + 1)));
  CHECK(seen == std::set<std::string>{"synth_001,local_hh", "synth_001,local_mse", "synth_002,local_hh",
                                      "synth_002,local_mse"});
}

TEST_CASE("fedglu rows exist exactly for patients with a federated model") {
  auto doc = small_doc();
  doc["data"]["synthetic"]["patients"] = 3;
  doc["regimes"] = {"federated", "fedglu"};
  const auto cfg = config::parse_config(doc);
  const auto res = exp::run_experiment(cfg, exp::load_cohort(cfg));
  const auto* global = res.find(config::kFedGlobal, 5);
  const auto* glu = res.find(config::kFedGlu, 5);
  REQUIRE(global);
  REQUIRE(glu);
  REQUIRE(glu->patients.size() == global->patients.size());
  for (std::size_t i = 0; i < glu->patients.size(); ++i) CHECK(glu->patients[i].patient_id == global->patients[i].patient_id);
  REQUIRE(res.ledgers.count(5));
  CHECK(res.ledgers.at(5).size() == 2);
}

TEST_CASE("runs are byte-reproducible and verifiable") {
  auto doc = small_doc();
  doc["regimes"] = {"local", "central", "federated", "fedglu"};
  doc["cega_svg"] = true;
  auto cfg = config::parse_config(doc);
  const auto base = scratch("repro");
  std::ostringstream log;

  cfg.output_dir = base / "a";
  cli::run_to_dir(cfg, log);
  cfg.output_dir = base / "b";
  cli::run_to_dir(cfg, log);

  for (const char* f : {"report.json", "report.csv", "fold_5/ledger.json", "fold_5/rounds/round_2.json", "cega.svg"}) {
    INFO(f);
    REQUIRE(fs::exists(base / "a" / f));
    CHECK(slurp(base / "a" / f) == slurp(base / "b" / f));
  }
  CHECK(fs::exists(base / "a" / "fold_5/rounds/round_1.json"));

  std::ostringstream out;
  cli::cmd_report(base / "a", true, out);
  CHECK(out.str().find("fedglu vs local_hh") != std::string::npos);
  CHECK(out.str().find("files match the manifest") != std::string::npos);

  // every "patients improved" count is bounded by the patient count
  const auto rep = json::parse(slurp(base / "a" / "report.json"));
  for (const auto& c : rep.at("comparisons")) CHECK(c.at("patients_improved") <= c.at("n_patients"));

  // rendered p-values come straight from the report
  const auto& first = rep.at("comparisons").at(0);
  if (!first.at("p").is_null()) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "p %.6f", first.at("p").get<double>());
    CHECK(out.str().find(buf) != std::string::npos);
  }

  {
    std::ofstream tamper(base / "a" / "report.csv", std::ios::app);
    tamper << "x\n";
  }
  CHECK_THROWS_AS(cli::cmd_report(base / "a", true, out), VerificationFailed);
  fs::remove(base / "b" / "manifest.json");
  CHECK_THROWS_AS(cli::cmd_report(base / "b", true, out), MissingArtifacts);
  CHECK_THROWS_AS(cli::cmd_report(base / "missing", false, out), MissingArtifacts);
  fs::remove_all(base);
}

TEST_CASE("csv data source resolves relative to the config file") {
  const auto base = scratch("csv");
  cgm::SyntheticCohortSpec spec;
  spec.n_patients = 2;
  spec.days_per_patient = 6;
  spec.rng_seed = 5;
  std::ostringstream log;
  cli::cmd_synth(spec, base / "cohort.csv", log);
  CHECK(log.str().find("median hypo%") != std::string::npos);

  auto doc = small_doc();
  doc["data"] = {{"csv", "cohort.csv"}};
  doc["output_dir"] = (base / "out").string();
  {
    std::ofstream f(base / "cfg.json");
    f << doc.dump();
  }
  const auto dir = cli::cmd_run(base / "cfg.json", std::nullopt, log);
  CHECK(fs::exists(dir / "report.json"));
  fs::remove_all(base);
}

TEST_CASE("synth is deterministic") {
  const auto base = scratch("synth");
  cgm::SyntheticCohortSpec spec;
  spec.days_per_patient = 2;
  std::ostringstream log;
  cli::cmd_synth(spec, base / "a.csv", log);
  cli::cmd_synth(spec, base / "b.csv", log);
  CHECK(slurp(base / "a.csv") == slurp(base / "b.csv"));
  const auto series = cgm::load_csv(base / "a.csv");
  CHECK(series.size() == 20);
  fs::remove_all(base);
}

TEST_CASE("alpha sweep echoes the grid") {
  auto doc = small_doc();
  doc["regimes"] = {"central"};
  const auto cfg = config::parse_config(doc);
  const auto cohort = exp::load_cohort(cfg);
  const std::vector<double> grid = {0.0, 0.5, 1.0};
  const auto res = exp::alpha_sweep(cfg, cohort, grid);
  CHECK(res.mode == "central");
  REQUIRE(res.rows.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(res.rows[i].alpha == grid[i]);
  std::ostringstream csv;
  report::write_sweep_csv(csv, res);
  CHECK(csv.str().rfind("alpha,hypo_improvement_pct,hyper_improvement_pct,ab_pct,cde_pct\n", 0) == 0);

  auto local_only = small_doc();
  CHECK_THROWS_AS(exp::alpha_sweep(config::parse_config(local_only), cohort, grid), ConfigError);
}

TEST_CASE("sha256 known answers") {
  CHECK(manifest::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(manifest::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("exit codes by error family") {
  CHECK(cli::exit_code(ConfigError("x")) == 2);
  CHECK(cli::exit_code(ParseError(3, "bad")) == 3);
  CHECK(cli::exit_code(InfeasibleSpec("x")) == 3);
  CHECK(cli::exit_code(VerificationFailed("x")) == 3);
  CHECK(cli::exit_code(NonFiniteGradient("x")) == 4);
  CHECK(cli::exit_code(std::runtime_error("x")) == 4);
}
