#include "fedglu/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "fedglu/errors.hpp"
#include "fedglu/rng.hpp"
#include "fedglu/stats.hpp"

namespace fedglu::exp {

using config::RunConfig;

Cohort build_cohort(std::vector<cgm::GlucoseSeries> series, const RunConfig& cfg) {
  if (series.empty()) throw EmptyDataset("the cohort has no patients");
  std::sort(series.begin(), series.end(),
            [](const cgm::GlucoseSeries& a, const cgm::GlucoseSeries& b) { return a.patient_id < b.patient_id; });
  Cohort cohort;
  for (auto& s : series) {
    PatientData p;
    p.patient_id = s.patient_id;
    p.profile = cgm::excursion_profile(s);
    const auto clean = cgm::preprocess(std::move(s), cfg.max_gap);
    p.plan = cgm::temporal_kfold(clean, cfg.folds, cfg.window);
    p.samples = cgm::window_samples(clean, cfg.window);
    cohort.patients.push_back(std::move(p));
  }
  return cohort;
}

Cohort load_cohort(const RunConfig& cfg) {
  if (cfg.data.csv) return build_cohort(cgm::load_csv(*cfg.data.csv), cfg);
  auto synthetic = cgm::generate_synthetic_cohort(*cfg.data.synthetic);
  Cohort cohort = build_cohort(std::move(synthetic.series), cfg);
  cohort.audit = std::move(synthetic.audit);
  return cohort;
}

const RegimeFold* ExperimentResult::find(const std::string& regime, int fold) const {
  for (const auto& r : runs) {
    if (r.regime == regime && r.fold == fold) return &r;
  }
  return nullptr;
}

namespace {

using Clock = std::chrono::steady_clock;

struct FoldData {
  int fold = 0;
  std::vector<std::string> ids;
  std::vector<cgm::SampleSet> train;
  std::vector<cgm::SampleSet> test;
};

FoldData split_cohort(const Cohort& cohort, const RunConfig& cfg, int fold, std::vector<std::string>& skipped) {
  FoldData fd;
  fd.fold = fold;
  for (const auto& p : cohort.patients) {
    auto split = cgm::split_fold(p.samples, p.plan.folds.at(static_cast<std::size_t>(fold - 1)), cfg.window);
    if (split.train.empty() || split.test.empty()) {
      skipped.push_back(p.patient_id);
      continue;
    }
    fd.ids.push_back(p.patient_id);
    fd.train.push_back(std::move(split.train));
    fd.test.push_back(std::move(split.test));
  }
  if (fd.ids.empty()) throw EmptyDataset("fold " + std::to_string(fold) + " has no usable patient");
  return fd;
}

std::uint64_t sub_seed(const RunConfig& cfg, int fold, const std::string& what) {
  return derive_seed(cfg.seed, "fold/" + std::to_string(fold) + "/" + what);
}

PatientResult evaluate_patient(const std::string& id, const nn::MlpModel& model, const cgm::SampleSet& train,
                               const cgm::SampleSet& test) {
  PatientResult r;
  r.patient_id = id;
  r.n_train = train.size();
  const auto targets = test.targets();
  r.reference.assign(targets.begin(), targets.end());
  const auto pairs = eval::make_pairs(targets, nn::predict(model, test), &r.clipped);
  r.prediction.reserve(pairs.size());
  for (const auto& p : pairs) r.prediction.push_back(p.prediction);
  r.rmse = eval::region_rmse(pairs);
  r.cega = eval::cega_breakdown(pairs);
  return r;
}

eval::RegionRmse pooled_rmse(const std::vector<PatientResult>& patients) {
  std::vector<eval::PredictionPair> all;
  for (const auto& p : patients) {
    for (std::size_t i = 0; i < p.reference.size(); ++i) all.push_back({p.reference[i], p.prediction[i]});
  }
  return eval::region_rmse(all);
}

SweepCandidate summarize_candidate(double alpha, std::optional<double> train_score,
                                   const std::vector<PatientResult>& patients) {
  SweepCandidate c;
  c.alpha = alpha;
  c.train_score = train_score;
  c.test_pooled = pooled_rmse(patients);
  for (const auto& p : patients) {
    c.ab_mean += p.cega.ab;
    c.cde_mean += p.cega.c + p.cega.de;
  }
  c.ab_mean /= static_cast<double>(patients.size());
  c.cde_mean /= static_cast<double>(patients.size());
  return c;
}

cgm::SampleSet pool(const std::vector<cgm::SampleSet>& parts) {
  cgm::SampleSet out(parts.front().wl());
  std::size_t total = 0;
  for (const auto& s : parts) total += s.size();
  out.reserve(total);
  for (const auto& s : parts) out.append(s);
  return out;
}

std::optional<double> train_score(const nn::MlpModel& model, const cgm::SampleSet& train) {
  const auto pairs = eval::make_pairs(train.targets(), nn::predict(model, train));
  return eval::region_rmse(pairs).combined();
}

bool has_both_excursions(const cgm::SampleSet& s) {
  const auto t = s.targets();
  return std::any_of(t.begin(), t.end(), [](double y) { return y < 70.0; }) &&
         std::any_of(t.begin(), t.end(), [](double y) { return y > 180.0; });
}

class Runner {
 public:
  Runner(const RunConfig& cfg, const RunHooks& hooks, ExperimentResult& out) : cfg_(cfg), hooks_(hooks), out_(out) {}

  void log(const std::string& msg) const {
    if (hooks_.log) hooks_.log(msg);
  }

  template <typename F>
  RegimeFold timed(const std::string& regime, int fold, F&& body) {
    const auto t0 = Clock::now();
    RegimeFold rf = body();
    rf.regime = regime;
    rf.fold = fold;
    rf.pooled = pooled_rmse(rf.patients);
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    out_.stage_seconds.emplace_back("fold_" + std::to_string(fold) + "/" + regime, secs);
    log("fold " + std::to_string(fold) + ": " + regime + " done in " + std::to_string(static_cast<int>(secs)) + " s");
    return rf;
  }

  nn::TrainConfig local_tc(int fold, const std::string& id) const {
    auto tc = cfg_.local_train;
    tc.seed = sub_seed(cfg_, fold, "local/shuffle/" + id);
    return tc;
  }

  RegimeFold local(const FoldData& fd, bool hh) {
    RegimeFold rf;
    for (std::size_t i = 0; i < fd.ids.size(); ++i) {
      const auto& id = fd.ids[i];
      const auto tc = local_tc(fd.fold, id);
      const auto init = sub_seed(cfg_, fd.fold, "local/init/" + id);
      if (!hh) {
        const auto m = fed::train_local(fd.train[i], loss::LossSpec::mse(), tc, init);
        rf.patients.push_back(evaluate_patient(id, m, fd.train[i], fd.test[i]));
        continue;
      }
      auto train_fn = [&](double a) { return fed::train_local(fd.train[i], loss::LossSpec::hypo_hyper(a), tc, init); };
      rf.patients.push_back(personalized(id, train_fn, fd.train[i], fd.test[i]));
    }
    return rf;
  }

  PatientResult personalized(const std::string& id, const std::function<nn::MlpModel(double)>& train_fn,
                             const cgm::SampleSet& train, const cgm::SampleSet& test) {
    if (cfg_.alpha) {
      auto r = evaluate_patient(id, train_fn(*cfg_.alpha), train, test);
      r.alpha = *cfg_.alpha;
      return r;
    }
    auto sel = fed::select_alpha_by_training(train_fn, cfg_.personal_alpha_grid, train);
    if (sel.selection.fallback) log("warning: " + id + " lacks hypo or hyper training targets, alpha falls back to 0.5");
    auto r = evaluate_patient(id, sel.model, train, test);
    r.alpha = sel.selection.alpha;
    r.selection = std::move(sel.selection);
    return r;
  }

  nn::TrainConfig central_tc(int fold) const {
    auto tc = cfg_.central_train;
    tc.seed = sub_seed(cfg_, fold, "central/shuffle");
    return tc;
  }

  std::vector<PatientResult> evaluate_all(const FoldData& fd, const nn::MlpModel& m) const {
    std::vector<PatientResult> out;
    for (std::size_t i = 0; i < fd.ids.size(); ++i) out.push_back(evaluate_patient(fd.ids[i], m, fd.train[i], fd.test[i]));
    return out;
  }

  RegimeFold central_mse(const FoldData& fd) {
    RegimeFold rf;
    const auto m = fed::train_central(fd.train, loss::LossSpec::mse(), central_tc(fd.fold),
                                      sub_seed(cfg_, fd.fold, "central/init"));
    rf.patients = evaluate_all(fd, m);
    return rf;
  }

  // Every candidate shares the initial weights and shuffle order of the
  // MSE model, so the loss is the only thing that changes.
  RegimeFold central_hh(const FoldData& fd) {
    RegimeFold rf;
    const auto tc = central_tc(fd.fold);
    const auto init = sub_seed(cfg_, fd.fold, "central/init");
    auto train_fn = [&](double a) { return fed::train_central(fd.train, loss::LossSpec::hypo_hyper(a), tc, init); };

    if (cfg_.alpha) {
      rf.patients = evaluate_all(fd, train_fn(*cfg_.alpha));
      for (auto& p : rf.patients) p.alpha = *cfg_.alpha;
      rf.sweep.push_back(summarize_candidate(*cfg_.alpha, std::nullopt, rf.patients));
      return rf;
    }

    const auto pooled = pool(fd.train);
    const bool scorable = has_both_excursions(pooled);
    const auto& grid = cfg_.alpha_grid;
    std::vector<std::vector<PatientResult>> results;
    for (double a : grid) {
      const auto m = train_fn(a);
      const auto score = scorable ? train_score(m, pooled) : std::nullopt;
      results.push_back(evaluate_all(fd, m));
      rf.sweep.push_back(summarize_candidate(a, score, results.back()));
      log("fold " + std::to_string(fd.fold) + ": central_hh alpha " + std::to_string(a) + " train score " +
          (score ? std::to_string(*score) : std::string("n/a")));
    }
    auto sel = fed::select_alpha(grid, [&](double a) {
      const auto it = std::find(grid.begin(), grid.end(), a);
      return rf.sweep[static_cast<std::size_t>(it - grid.begin())].train_score;
    });
    if (sel.fallback) log("warning: pooled training targets lack hypo or hyper values, alpha falls back to 0.5");
    const auto it = std::find(grid.begin(), grid.end(), sel.alpha);
    if (it != grid.end()) {
      rf.patients = std::move(results[static_cast<std::size_t>(it - grid.begin())]);
    } else {
      rf.patients = evaluate_all(fd, train_fn(sel.alpha));
    }
    for (auto& p : rf.patients) p.alpha = sel.alpha;
    rf.cohort_selection = std::move(sel);
    return rf;
  }

  nn::MlpModel federated(const FoldData& fd, RegimeFold& rf) {
    std::vector<fed::ClientState> clients;
    for (std::size_t i = 0; i < fd.ids.size(); ++i) clients.push_back({fd.ids[i], fd.train[i], std::nullopt, {}});
    auto fc = cfg_.federated;
    fc.seed = sub_seed(cfg_, fd.fold, "fed");
    const auto initial = nn::init_model(sub_seed(cfg_, fd.fold, "fed/init"));
    const int fold = fd.fold;
    auto res = fed::run_federated(clients, initial, fc, [&](const fed::RoundRecord& rec, std::span<const double> w) {
      if (hooks_.on_round) hooks_.on_round(fold, rec, w);
    });
    out_.ledgers[fold] = std::move(res.ledger);
    nn::MlpModel global(initial.dims(), std::move(res.server.global));
    rf.patients = evaluate_all(fd, global);
    return global;
  }

  RegimeFold fedglu(const FoldData& fd, const nn::MlpModel& global) {
    RegimeFold rf;
    for (std::size_t i = 0; i < fd.ids.size(); ++i) {
      const fed::ClientState client{fd.ids[i], fd.train[i], std::nullopt, {}};
      const auto seed = sub_seed(cfg_, fd.fold, "fedglu/" + fd.ids[i]);
      auto train_fn = [&](double a) {
        loss::HhParams hh;
        hh.alpha = a;
        return fed::local_finetune(client, global, hh, cfg_.federated, seed);
      };
      rf.patients.push_back(personalized(fd.ids[i], train_fn, fd.train[i], fd.test[i]));
    }
    return rf;
  }

 private:
  const RunConfig& cfg_;
  const RunHooks& hooks_;
  ExperimentResult& out_;
};

}  // namespace

ExperimentResult run_experiment(const RunConfig& cfg, const Cohort& cohort, const RunHooks& hooks) {
  cfg.validate();
  ExperimentResult out;
  Runner run(cfg, hooks, out);
  for (int fold : cfg.fold_list()) {
    auto& skipped = out.skipped[fold];
    const FoldData fd = split_cohort(cohort, cfg, fold, skipped);
    for (const auto& id : skipped) run.log("fold " + std::to_string(fold) + ": skipping " + id + " (no train or test windows)");

    if (cfg.has_regime(config::kLocalMse)) {
      out.runs.push_back(run.timed(config::kLocalMse, fold, [&] { return run.local(fd, false); }));
    }
    if (cfg.has_regime(config::kLocalHh)) {
      out.runs.push_back(run.timed(config::kLocalHh, fold, [&] { return run.local(fd, true); }));
    }
    if (cfg.has_regime(config::kCentralMse)) {
      out.runs.push_back(run.timed(config::kCentralMse, fold, [&] { return run.central_mse(fd); }));
    }
    if (cfg.has_regime(config::kCentralHh)) {
      out.runs.push_back(run.timed(config::kCentralHh, fold, [&] { return run.central_hh(fd); }));
    }
    if (cfg.has_regime(config::kFedGlobal)) {
      nn::MlpModel global;
      out.runs.push_back(run.timed(config::kFedGlobal, fold, [&] {
        RegimeFold rf;
        global = run.federated(fd, rf);
        return rf;
      }));
      if (cfg.has_regime(config::kFedGlu)) {
        out.runs.push_back(run.timed(config::kFedGlu, fold, [&] { return run.fedglu(fd, global); }));
      }
    }
  }
  return out;
}

std::vector<SweepRow> sweep_rows(const RegimeFold& mse, const RegimeFold& hh) {
  auto improvement = [](const std::optional<double>& base, const std::optional<double>& v) -> std::optional<double> {
    if (!base || !v || *base == 0.0) return std::nullopt;
    return 100.0 * (*base - *v) / *base;
  };
  std::vector<SweepRow> rows;
  for (const auto& c : hh.sweep) {
    SweepRow r;
    r.alpha = c.alpha;
    r.hypo_improvement_pct = improvement(mse.pooled.hypo, c.test_pooled.hypo);
    r.hyper_improvement_pct = improvement(mse.pooled.hyper, c.test_pooled.hyper);
    r.ab_pct = c.ab_mean;
    r.cde_pct = c.cde_mean;
    rows.push_back(r);
  }
  return rows;
}

namespace {

// Mean over folds of each row; an improvement missing in any fold is
// averaged over the folds that have it.
std::vector<SweepRow> average_rows(const std::vector<std::vector<SweepRow>>& per_fold) {
  std::vector<SweepRow> out = per_fold.front();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    double hypo = 0.0, hyper = 0.0, ab = 0.0, cde = 0.0;
    int n_hypo = 0, n_hyper = 0;
    for (const auto& rows : per_fold) {
      if (rows[i].hypo_improvement_pct) {
        hypo += *rows[i].hypo_improvement_pct;
        ++n_hypo;
      }
      if (rows[i].hyper_improvement_pct) {
        hyper += *rows[i].hyper_improvement_pct;
        ++n_hyper;
      }
      ab += rows[i].ab_pct;
      cde += rows[i].cde_pct;
    }
    const double folds = static_cast<double>(per_fold.size());
    out[i].hypo_improvement_pct = n_hypo ? std::optional<double>(hypo / n_hypo) : std::nullopt;
    out[i].hyper_improvement_pct = n_hyper ? std::optional<double>(hyper / n_hyper) : std::nullopt;
    out[i].ab_pct = ab / folds;
    out[i].cde_pct = cde / folds;
  }
  return out;
}

void correlate(AlphaSweepResult& res) {
  auto corr = [&](bool hypo, std::optional<double>& rho, std::optional<double>& p) {
    std::vector<double> a, v;
    for (const auto& r : res.rows) {
      const auto& x = hypo ? r.hypo_improvement_pct : r.hyper_improvement_pct;
      if (!x) continue;
      a.push_back(r.alpha);
      v.push_back(*x);
    }
    try {
      const auto s = stats::spearman_rho(a, v);
      rho = s.rho;
      p = s.p;
    } catch (const DegenerateVariance&) {
    }
  };
  corr(true, res.rho_hypo, res.p_hypo);
  corr(false, res.rho_hyper, res.p_hyper);
}

}  // namespace

AlphaSweepResult alpha_sweep(const RunConfig& cfg, const Cohort& cohort, std::span<const double> alphas,
                             const RunHooks& hooks) {
  if (alphas.empty()) throw ConfigError("alpha sweep needs at least one alpha");
  for (double a : alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("alpha values must lie in [0, 1]");
  }
  if (!cfg.hh_enabled) throw ConfigError("alpha sweep needs loss.loss = 'hh'");

  AlphaSweepResult res;
  std::vector<std::vector<SweepRow>> per_fold;
  const bool central = cfg.has_regime(config::kCentralMse) || cfg.has_regime(config::kCentralHh);
  if (central) {
    res.mode = "central";
    RunConfig c = cfg;
    c.regimes = {config::kCentralMse, config::kCentralHh};
    c.alpha.reset();
    c.alpha_grid.assign(alphas.begin(), alphas.end());
    const auto exp = run_experiment(c, cohort, hooks);
    for (int fold : c.fold_list()) {
      const auto* mse = exp.find(config::kCentralMse, fold);
      const auto* hh = exp.find(config::kCentralHh, fold);
      per_fold.push_back(sweep_rows(*mse, *hh));
    }
  } else if (cfg.has_regime(config::kFedGlu)) {
    res.mode = "fedglu";
    ExperimentResult scratch;
    Runner run(cfg, hooks, scratch);
    for (int fold : cfg.fold_list()) {
      std::vector<std::string> skipped;
      const FoldData fd = split_cohort(cohort, cfg, fold, skipped);
      RegimeFold global_rf;
      const auto global = run.federated(fd, global_rf);

      RegimeFold mse;
      RegimeFold hh;
      std::vector<std::vector<PatientResult>> by_alpha(alphas.size());
      for (std::size_t i = 0; i < fd.ids.size(); ++i) {
        nn::TrainConfig tc;
        tc.learning_rate = cfg.federated.client_lr;
        tc.batch_size = cfg.federated.batch_size;
        tc.max_epochs = cfg.federated.finetune_epochs;
        tc.patience = cfg.federated.finetune_patience;
        tc.seed = sub_seed(cfg, fold, "fedglu/" + fd.ids[i]);
        const auto base = nn::train(global, fd.train[i], loss::LossSpec::mse(), tc).model;
        mse.patients.push_back(evaluate_patient(fd.ids[i], base, fd.train[i], fd.test[i]));
        const fed::ClientState client{fd.ids[i], fd.train[i], std::nullopt, {}};
        for (std::size_t k = 0; k < alphas.size(); ++k) {
          loss::HhParams h;
          h.alpha = alphas[k];
          const auto m = fed::local_finetune(client, global, h, cfg.federated, tc.seed);
          by_alpha[k].push_back(evaluate_patient(fd.ids[i], m, fd.train[i], fd.test[i]));
        }
      }
      mse.pooled = pooled_rmse(mse.patients);
      for (std::size_t k = 0; k < alphas.size(); ++k) {
        hh.sweep.push_back(summarize_candidate(alphas[k], std::nullopt, by_alpha[k]));
      }
      per_fold.push_back(sweep_rows(mse, hh));
    }
  } else {
    throw ConfigError("alpha sweep needs a central or fedglu regime in 'regimes'");
  }
  res.rows = average_rows(per_fold);
  correlate(res);
  return res;
}

}  // namespace fedglu::exp
