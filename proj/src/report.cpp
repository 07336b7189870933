#include "fedglu/report.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "fedglu/config.hpp"
#include "fedglu/errors.hpp"
#include "fedglu/stats.hpp"

namespace fedglu::report {

using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json rmse_json(const eval::RegionRmse& r) {
  return {{"overall", opt(r.overall)}, {"hypo", opt(r.hypo)},           {"normal", opt(r.normal)},
          {"hyper", opt(r.hyper)},     {"combined", opt(r.combined())}, {"n_hypo", r.n_hypo},
          {"n_normal", r.n_normal},    {"n_hyper", r.n_hyper}};
}

json cega_json(const eval::ZoneBreakdown& z) {
  json zones = json::object();
  for (auto zone : eval::kAllZones) zones[std::string(eval::zone_name(zone))] = z.pct[static_cast<std::size_t>(zone)];
  return {{"zones", zones}, {"ab", z.ab}, {"c", z.c}, {"de", z.de}};
}

json mean_std_json(const eval::MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }

json cega_summary_json(const eval::CegaSummary& s) {
  json zones = json::object();
  for (auto zone : eval::kAllZones) {
    zones[std::string(eval::zone_name(zone))] = mean_std_json(s.zones[static_cast<std::size_t>(zone)]);
  }
  return {{"zones", zones}, {"ab", mean_std_json(s.ab)}, {"c", mean_std_json(s.c)}, {"de", mean_std_json(s.de)}};
}

json selection_json(const fed::AlphaSelection& s) {
  json scores = json::array();
  for (const auto& v : s.scores) scores.push_back(opt(v));
  return {{"alpha", s.alpha}, {"fallback", s.fallback}, {"candidates", s.candidates}, {"scores", scores}};
}

json patient_json(const exp::PatientResult& p) {
  json j = {{"n_train", p.n_train},
            {"n_test", p.reference.size()},
            {"clipped", p.clipped},
            {"rmse", rmse_json(p.rmse)},
            {"cega", cega_json(p.cega)}};
  if (p.alpha) j["alpha"] = *p.alpha;
  if (p.selection) j["alpha_selection"] = selection_json(*p.selection);
  return j;
}

std::string fold_key(int fold) { return "fold_" + std::to_string(fold); }

// Per-patient value of one RMSE field averaged over the folds where it exists.
std::map<std::string, double> patient_means(const exp::ExperimentResult& result, const std::string& regime,
                                            const std::string& field) {
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& rf : result.runs) {
    if (rf.regime != regime) continue;
    for (const auto& p : rf.patients) {
      std::optional<double> v;
      if (field == "combined") v = p.rmse.combined();
      if (field == "hypo") v = p.rmse.hypo;
      if (field == "hyper") v = p.rmse.hyper;
      if (field == "overall") v = p.rmse.overall;
      if (!v) continue;
      acc[p.patient_id].first += *v;
      acc[p.patient_id].second += 1;
    }
  }
  std::map<std::string, double> out;
  for (const auto& [id, s] : acc) out[id] = s.first / s.second;
  return out;
}

bool has_regime(const exp::ExperimentResult& result, const std::string& regime) {
  for (const auto& rf : result.runs) {
    if (rf.regime == regime) return true;
  }
  return false;
}

json comparison(const exp::ExperimentResult& result, const std::string& regime, const std::string& baseline,
                const std::string& field) {
  const auto a = patient_means(result, regime, field);
  const auto b = patient_means(result, baseline, field);
  std::vector<double> deltas;  // baseline - regime; positive means the regime is better
  for (const auto& [id, v] : a) {
    const auto it = b.find(id);
    if (it != b.end()) deltas.push_back(it->second - v);
  }
  json j = {{"regime", regime}, {"baseline", baseline}, {"metric", field + "_rmse"}, {"n_patients", deltas.size()}};
  std::size_t improved = 0;
  for (double d : deltas) improved += d > 0.0 ? 1 : 0;
  j["patients_improved"] = improved;
  j["mean_delta"] = nullptr;
  j["t"] = nullptr;
  j["p"] = nullptr;
  if (!deltas.empty()) {
    double s = 0.0;
    for (double d : deltas) s += d;
    j["mean_delta"] = s / static_cast<double>(deltas.size());
  }
  try {
    const auto t = stats::paired_t_test(deltas);
    j["t"] = t.t;
    j["p"] = t.p;
  } catch (const DegenerateVariance&) {
  }
  return j;
}

}  // namespace

json build_report(const exp::ExperimentResult& result, const exp::Cohort& cohort) {
  json rep;
  rep["format"] = 1;
  json patients = json::object();
  for (const auto& p : cohort.patients) {
    patients[p.patient_id] = {
        {"hypo_pct", p.profile.hypo_pct}, {"hyper_pct", p.profile.hyper_pct}, {"observed", p.profile.observed}};
  }
  rep["patients"] = patients;
  json skipped = json::object();
  for (const auto& [fold, ids] : result.skipped) skipped[fold_key(fold)] = ids;
  rep["skipped"] = skipped;

  json regimes = json::object();
  std::map<std::string, std::vector<std::vector<eval::PredictionPair>>> all_pairs;
  std::map<std::string, std::vector<const exp::PatientResult*>> all_patients;
  for (const auto& rf : result.runs) {
    json fold;
    json pj = json::object();
    std::vector<std::vector<eval::PredictionPair>> pairs;
    for (const auto& p : rf.patients) {
      pj[p.patient_id] = patient_json(p);
      std::vector<eval::PredictionPair> pp(p.reference.size());
      for (std::size_t i = 0; i < pp.size(); ++i) pp[i] = {p.reference[i], p.prediction[i]};
      pairs.push_back(pp);
      all_pairs[rf.regime].push_back(std::move(pp));
      all_patients[rf.regime].push_back(&p);
    }
    fold["patients"] = pj;
    fold["pooled_rmse"] = rmse_json(rf.pooled);
    fold["cega"] = cega_summary_json(eval::cega_summary(pairs));
    if (rf.cohort_selection) fold["alpha_selection"] = selection_json(*rf.cohort_selection);
    if (!rf.sweep.empty()) {
      json sw = json::array();
      for (const auto& c : rf.sweep) {
        sw.push_back({{"alpha", c.alpha},
                      {"train_score", opt(c.train_score)},
                      {"test_rmse", rmse_json(c.test_pooled)},
                      {"ab_mean", c.ab_mean},
                      {"cde_mean", c.cde_mean}});
      }
      fold["sweep"] = sw;
    }
    regimes[rf.regime][fold_key(rf.fold)] = fold;
  }
  rep["regimes"] = regimes;

  // Summary over every (fold, patient) entry of a regime.
  json summary = json::object();
  for (const auto& [regime, pairs] : all_pairs) {
    json s;
    s["entries"] = pairs.size();
    s["cega"] = cega_summary_json(eval::cega_summary(pairs));
    json means = json::object();
    for (const char* field : {"overall", "hypo", "normal", "hyper", "combined"}) {
      std::vector<double> vals;
      for (const auto* p : all_patients[regime]) {
        const std::string f = field;
        const auto v = f == "overall"  ? p->rmse.overall
                       : f == "hypo"   ? p->rmse.hypo
                       : f == "normal" ? p->rmse.normal
                       : f == "hyper"  ? p->rmse.hyper
                                       : p->rmse.combined();
        if (v) vals.push_back(*v);
      }
      means[field] = {{"n", vals.size()}, {"mean", nullptr}, {"std", nullptr}};
      if (!vals.empty()) {
        const auto ms = eval::mean_std(vals);
        means[field]["mean"] = ms.mean;
        means[field]["std"] = ms.std;
      }
    }
    s["rmse"] = means;
    summary[regime] = s;
  }
  rep["summary"] = summary;

  static const std::vector<std::pair<std::string, std::string>> kPairs = {
      {config::kLocalHh, config::kLocalMse},   {config::kCentralHh, config::kCentralMse},
      {config::kFedGlu, config::kFedGlobal},   {config::kFedGlu, config::kLocalHh},
      {config::kFedGlu, config::kCentralHh},   {config::kCentralHh, config::kLocalHh},
      {config::kFedGlobal, config::kLocalMse}, {config::kCentralMse, config::kLocalMse}};
  json comps = json::array();
  for (const auto& [a, b] : kPairs) {
    if (!has_regime(result, a) || !has_regime(result, b)) continue;
    for (const char* field : {"combined", "hypo", "hyper", "overall"}) comps.push_back(comparison(result, a, b, field));
  }
  rep["comparisons"] = comps;
  return rep;
}

void write_report_csv(std::ostream& out, const json& rep) {
  out << "patient,regime,fold,metric,value\n";
  for (const auto& [regime, folds] : rep.at("regimes").items()) {
    for (const auto& [fold_name, fold] : folds.items()) {
      const std::string fold_no = fold_name.substr(5);
      for (const auto& [id, p] : fold.at("patients").items()) {
        auto row = [&](const std::string& metric, const json& v) {
          if (v.is_null()) return;
          out << id << ',' << regime << ',' << fold_no << ',' << metric << ',';
          if (v.is_number_float()) {
            out << format_double(v.get<double>());
          } else {
            out << v.dump();
          }
          out << '\n';
        };
        row("n_train", p.at("n_train"));
        row("n_test", p.at("n_test"));
        row("clipped", p.at("clipped"));
        for (const auto& [k, v] : p.at("rmse").items()) row(k.rfind("n_", 0) == 0 ? k : "rmse_" + k, v);
        for (const auto& [k, v] : p.at("cega").at("zones").items()) row("cega_" + k, v);
        row("cega_ab", p.at("cega").at("ab"));
        row("cega_c", p.at("cega").at("c"));
        row("cega_de", p.at("cega").at("de"));
        if (p.contains("alpha")) row("alpha", p.at("alpha"));
      }
    }
  }
}

namespace {

std::string fixed(const json& v, int digits = 2) {
  if (v.is_null()) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v.get<double>());
  return buf;
}

std::string pm(const json& ms) { return fixed(ms.at("mean")) + " +/- " + fixed(ms.at("std")); }

std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

}  // namespace

void render_report(std::ostream& out, const json& rep) {
  const auto& summary = rep.at("summary");
  out << "CEGA (% of test pairs, mean +/- std over patient-folds)\n";
  out << pad("regime", 12) << pad("A+B", 20) << pad("C", 20) << "D+E\n";
  for (const auto& [regime, s] : summary.items()) {
    const auto& c = s.at("cega");
    out << pad(regime, 12) << pad(pm(c.at("ab")), 20) << pad(pm(c.at("c")), 20) << pm(c.at("de")) << '\n';
  }
  out << "\nRMSE (mg/dL, mean +/- std over patient-folds)\n";
  out << pad("regime", 12) << pad("overall", 20) << pad("hypo", 20) << pad("hyper", 20) << "hypo+hyper\n";
  for (const auto& [regime, s] : summary.items()) {
    const auto& r = s.at("rmse");
    out << pad(regime, 12) << pad(pm(r.at("overall")), 20) << pad(pm(r.at("hypo")), 20) << pad(pm(r.at("hyper")), 20)
        << pm(r.at("combined")) << '\n';
  }
  const auto& comps = rep.at("comparisons");
  if (!comps.empty()) {
    out << "\nComparisons (delta = baseline - regime, per-patient means over folds)\n";
    for (const auto& c : comps) {
      out << c.at("regime").get<std::string>() << " vs " << c.at("baseline").get<std::string>() << "  "
          << c.at("metric").get<std::string>() << ": patients improved " << c.at("patients_improved").get<std::size_t>()
          << "/" << c.at("n_patients").get<std::size_t>() << ", mean delta " << fixed(c.at("mean_delta"), 3)
          << ", t " << fixed(c.at("t"), 4) << ", p " << fixed(c.at("p"), 6) << '\n';
    }
  }
  for (const auto& [regime, folds] : rep.at("regimes").items()) {
    for (const auto& [fold_name, fold] : folds.items()) {
      if (fold.contains("alpha_selection")) {
        const auto& sel = fold.at("alpha_selection");
        out << "\n" << regime << " " << fold_name << ": cohort alpha " << fixed(sel.at("alpha"))
            << (sel.at("fallback").get<bool>() ? " (fallback)" : "") << '\n';
      }
    }
  }
}

json ledger_json(const fed::RoundLedger& ledger) {
  json rounds = json::array();
  for (const auto& r : ledger) {
    json digests = json::array();
    for (auto d : r.client_param_digests) {
      char buf[17];
      std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(d));
      digests.push_back(buf);
    }
    char g[17];
    std::snprintf(g, sizeof g, "%016llx", static_cast<unsigned long long>(r.global_digest));
    rounds.push_back({{"round", r.round},
                      {"client_ids", r.client_ids},
                      {"n_k", r.n_k},
                      {"n", r.n},
                      {"client_train_loss", r.client_train_loss},
                      {"client_param_digests", digests},
                      {"global_digest", g},
                      {"mean_client_loss", r.mean_client_loss},
                      {"global_train_mse", r.global_train_mse}});
  }
  return {{"rounds", rounds}};
}

json sweep_json(const exp::AlphaSweepResult& sweep) {
  json rows = json::array();
  for (const auto& r : sweep.rows) {
    rows.push_back({{"alpha", r.alpha},
                    {"hypo_improvement_pct", opt(r.hypo_improvement_pct)},
                    {"hyper_improvement_pct", opt(r.hyper_improvement_pct)},
                    {"ab_pct", r.ab_pct},
                    {"cde_pct", r.cde_pct}});
  }
  return {{"mode", sweep.mode},
          {"rows", rows},
          {"spearman",
           {{"hypo", {{"rho", opt(sweep.rho_hypo)}, {"p", opt(sweep.p_hypo)}}},
            {"hyper", {{"rho", opt(sweep.rho_hyper)}, {"p", opt(sweep.p_hyper)}}}}}};
}

void write_sweep_csv(std::ostream& out, const exp::AlphaSweepResult& sweep) {
  out << "alpha,hypo_improvement_pct,hyper_improvement_pct,ab_pct,cde_pct\n";
  auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : sweep.rows) {
    out << format_double(r.alpha) << ',' << cell(r.hypo_improvement_pct) << ',' << cell(r.hyper_improvement_pct) << ','
        << format_double(r.ab_pct) << ',' << format_double(r.cde_pct) << '\n';
  }
}

void render_sweep(std::ostream& out, const exp::AlphaSweepResult& sweep) {
  const json j = sweep_json(sweep);
  out << "alpha sweep (" << sweep.mode << "), improvement of HH over MSE in %\n";
  out << pad("alpha", 8) << pad("hypo", 10) << pad("hyper", 10) << pad("A+B", 10) << "C+D+E\n";
  for (const auto& r : j.at("rows")) {
    out << pad(fixed(r.at("alpha")), 8) << pad(fixed(r.at("hypo_improvement_pct")), 10)
        << pad(fixed(r.at("hyper_improvement_pct")), 10) << pad(fixed(r.at("ab_pct")), 10) << fixed(r.at("cde_pct"))
        << '\n';
  }
  const auto& sp = j.at("spearman");
  out << "spearman rho(alpha, hypo improvement) = " << fixed(sp.at("hypo").at("rho"), 4)
      << " (p " << fixed(sp.at("hypo").at("p"), 4) << ")\n";
  out << "spearman rho(alpha, hyper improvement) = " << fixed(sp.at("hyper").at("rho"), 4)
      << " (p " << fixed(sp.at("hyper").at("p"), 4) << ")\n";
}

void write_cega_svg(std::ostream& out, std::span<const eval::PredictionPair> pairs, const std::string& title) {
  constexpr double kSize = 400.0;
  constexpr double kMargin = 40.0;
  auto px = [&](double v) { return kMargin + v; };
  auto py = [&](double v) { return kMargin + kSize - v; };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"480\" viewBox=\"0 0 480 480\">\n";
  out << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"400\" height=\"400\" fill=\"white\" "
      << "stroke=\"black\"/>\n";
  out << "<text x=\"240\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  out << "<g fill=\"#1f77b4\" fill-opacity=\"0.4\">\n";
  for (const auto& p : pairs) {
    const double x = std::clamp(p.reference, 0.0, kSize);
    const double y = std::clamp(p.prediction, 0.0, kSize);
    out << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y)) << "\" r=\"1.2\"/>\n";
  }
  out << "</g>\n";
  const double lines[][4] = {{0, 0, 400, 400},          {0, 70, 175.0 / 3.0, 70}, {175.0 / 3.0, 70, 400 / 1.2, 400},
                             {70, 84, 70, 400},         {0, 180, 70, 180},        {70, 180, 290, 400},
                             {70, 0, 70, 56},           {70, 56, 400, 320},       {180, 0, 180, 70},
                             {180, 70, 400, 70},        {240, 70, 240, 180},      {240, 180, 400, 180},
                             {130, 0, 180, 70}};
  out << "<g stroke=\"black\" stroke-width=\"1\">\n";
  for (const auto& l : lines) {
    out << "<line x1=\"" << num(px(l[0])) << "\" y1=\"" << num(py(l[1])) << "\" x2=\"" << num(px(l[2])) << "\" y2=\""
        << num(py(l[3])) << "\"/>\n";
  }
  out << "</g>\n";
  const std::pair<const char*, std::array<double, 2>> labels[] = {
      {"A", {30, 15}}, {"A", {310, 290}}, {"B", {280, 370}}, {"B", {370, 220}}, {"C", {160, 370}},
      {"C", {160, 15}}, {"D", {30, 140}}, {"D", {370, 120}}, {"E", {30, 370}}, {"E", {370, 15}}};
  out << "<g font-size=\"12\">\n";
  for (const auto& [text, at] : labels) {
    out << "<text x=\"" << num(px(at[0])) << "\" y=\"" << num(py(at[1])) << "\">" << text << "</text>\n";
  }
  out << "</g>\n";
  out << "<text x=\"240\" y=\"474\" text-anchor=\"middle\" font-size=\"12\">reference (mg/dL)</text>\n";
  out << "<text x=\"12\" y=\"240\" font-size=\"12\" transform=\"rotate(-90 12 240)\" text-anchor=\"middle\">"
      << "prediction (mg/dL)</text>\n";
  out << "</svg>\n";
}

}  // namespace fedglu::report
