#include "fedglu/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "fedglu/errors.hpp"

namespace fedglu::config {

using nlohmann::json;

const std::vector<std::string>& all_regimes() {
  static const std::vector<std::string> names = {kLocalMse, kLocalHh, kCentralMse, kCentralHh, kFedGlobal, kFedGlu};
  return names;
}

bool RunConfig::has_regime(const std::string& name) const {
  return std::find(regimes.begin(), regimes.end(), name) != regimes.end();
}

std::vector<int> RunConfig::fold_list() const {
  if (!use_folds.empty()) return use_folds;
  std::vector<int> all(static_cast<std::size_t>(folds));
  for (int i = 0; i < folds; ++i) all[static_cast<std::size_t>(i)] = i + 1;
  return all;
}

namespace {

// Object reader that rejects keys it was not asked about.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json& at(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string child(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  void read(const char* key, T& out) {
    if (!has(key)) return;
    const json& v = at(key);
    try {
      if constexpr (std::is_same_v<T, int>) {
        if (!v.is_number_integer()) throw ConfigError("");
        out = v.get<int>();
      } else if constexpr (std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) throw ConfigError("");
        out = v.get<std::uint64_t>();
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError("");
        out = v.get<double>();
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
        out = v.get<bool>();
      } else {
        if (!v.is_string()) throw ConfigError("");
        out = v.get<std::string>();
      }
    } catch (const ConfigError&) {
      throw ConfigError(child(key) + " has the wrong type");
    }
  }

  std::vector<double> read_doubles(const char* key) {
    const json& v = at(key);
    if (!v.is_array() || v.empty()) throw ConfigError(child(key) + " must be a non-empty array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw ConfigError(child(key) + " must be a non-empty array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + child(it.key().c_str()) + "'");
    }
  }

  std::string where() const { return path_.empty() ? "config" : path_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_train(Section s, nn::TrainConfig& t) {
  s.read("learning_rate", t.learning_rate);
  s.read("batch_size", t.batch_size);
  s.read("max_epochs", t.max_epochs);
  s.read("patience", t.patience);
  s.finish();
}

void check_alpha(double a, const std::string& path) {
  if (!(a >= 0.0 && a <= 1.0)) throw ConfigError(path + " must lie in [0, 1]");
}

std::vector<std::string> expand_regimes(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) throw ConfigError(path + " must be a non-empty array of names");
  std::set<std::string> wanted;
  for (const auto& x : v) {
    if (!x.is_string()) throw ConfigError(path + " must be a non-empty array of names");
    const auto name = x.get<std::string>();
    if (name == "local") {
      wanted.insert({kLocalMse, kLocalHh});
    } else if (name == "central") {
      wanted.insert({kCentralMse, kCentralHh});
    } else if (name == "federated") {
      wanted.insert(kFedGlobal);
    } else if (std::find(all_regimes().begin(), all_regimes().end(), name) != all_regimes().end()) {
      wanted.insert(name);
    } else {
      throw ConfigError(path + ": unknown regime '" + name + "'");
    }
  }
  std::vector<std::string> out;
  for (const auto& r : all_regimes()) {
    if (wanted.count(r)) out.push_back(r);
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  if (data.csv.has_value() == data.synthetic.has_value()) {
    throw ConfigError("data needs exactly one of 'csv' or 'synthetic'");
  }
  if (data.synthetic) data.synthetic->validate();
  window.validate();
  if (max_gap < 1) throw ConfigError("window.max_gap must be positive");
  if (folds < 2) throw ConfigError("folds.k must be at least 2");
  for (int f : use_folds) {
    if (f < 1 || f > folds) throw ConfigError("folds.use entries must lie in [1, folds.k]");
  }
  local_train.validate();
  central_train.validate();
  federated.validate();
  if (checkpoint_every < 1) throw ConfigError("federated.checkpoint_every must be positive");
  if (alpha) check_alpha(*alpha, "loss.alpha");
  for (double a : alpha_grid) check_alpha(a, "loss.alpha_grid");
  for (double a : personal_alpha_grid) check_alpha(a, "loss.personal_alpha_grid");
  if (regimes.empty()) throw ConfigError("regimes must name at least one regime");
  if (has_regime(kFedGlu) && !has_regime(kFedGlobal)) {
    throw ConfigError("regimes: 'fedglu' fine-tunes the federated model and needs 'federated' as well");
  }
  if (!hh_enabled && (has_regime(kLocalHh) || has_regime(kCentralHh) || has_regime(kFedGlu))) {
    throw ConfigError("loss.loss is 'mse' but an HH regime was requested");
  }
}

RunConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  cfg.alpha_grid = fed::default_alpha_grid();
  Section root(doc, "");

  {
    Section d(root.at("data"), "data");
    if (d.has("csv")) {
      std::string p;
      d.read("csv", p);
      std::filesystem::path path(p);
      cfg.data.csv = path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    }
    if (d.has("synthetic")) {
      Section s(d.at("synthetic"), "data.synthetic");
      cgm::SyntheticCohortSpec spec;
      s.read("patients", spec.n_patients);
      s.read("days", spec.days_per_patient);
      s.read("hypo", spec.target_hypo_fraction);
      s.read("hyper", spec.target_hyper_fraction);
      s.read("seed", spec.rng_seed);
      s.read("missing", spec.missing_fraction);
      s.finish();
      cfg.data.synthetic = spec;
    }
    d.finish();
  }
  if (root.has("window")) {
    Section w(root.at("window"), "window");
    w.read("wl", cfg.window.wl);
    w.read("ph", cfg.window.ph);
    w.read("max_gap", cfg.max_gap);
    w.finish();
  }
  if (root.has("folds")) {
    Section f(root.at("folds"), "folds");
    f.read("k", cfg.folds);
    if (f.has("use")) {
      const json& u = f.at("use");
      if (!u.is_array()) throw ConfigError("folds.use must be an array of fold numbers");
      std::set<int> uniq;
      for (const auto& x : u) {
        if (!x.is_number_integer()) throw ConfigError("folds.use must be an array of fold numbers");
        uniq.insert(x.get<int>());
      }
      cfg.use_folds.assign(uniq.begin(), uniq.end());
    }
    f.finish();
  }
  if (root.has("train")) read_train(Section(root.at("train"), "train"), cfg.local_train);
  cfg.central_train = cfg.local_train;
  if (root.has("central_train")) read_train(Section(root.at("central_train"), "central_train"), cfg.central_train);
  if (root.has("federated")) {
    Section f(root.at("federated"), "federated");
    f.read("rounds", cfg.federated.rounds);
    f.read("local_epochs", cfg.federated.local_epochs);
    f.read("batch_size", cfg.federated.batch_size);
    f.read("client_lr", cfg.federated.client_lr);
    f.read("server_lr", cfg.federated.server_lr);
    f.read("finetune_epochs", cfg.federated.finetune_epochs);
    f.read("finetune_patience", cfg.federated.finetune_patience);
    f.read("checkpoint_every", cfg.checkpoint_every);
    f.finish();
  }
  if (root.has("loss")) {
    Section l(root.at("loss"), "loss");
    std::string kind = "hh";
    l.read("loss", kind);
    if (kind != "hh" && kind != "mse") throw ConfigError("loss.loss must be 'hh' or 'mse'");
    cfg.hh_enabled = kind == "hh";
    if (l.has("alpha")) {
      double a = 0.0;
      l.read("alpha", a);
      cfg.alpha = a;
    }
    if (l.has("alpha_grid")) cfg.alpha_grid = l.read_doubles("alpha_grid");
    if (l.has("personal_alpha_grid")) cfg.personal_alpha_grid = l.read_doubles("personal_alpha_grid");
    if (cfg.alpha && (l.has("alpha_grid") || l.has("personal_alpha_grid"))) {
      throw ConfigError("loss: give either 'alpha' or an alpha grid, not both");
    }
    l.finish();
  }
  if (cfg.personal_alpha_grid.empty()) cfg.personal_alpha_grid = cfg.alpha_grid;
  if (!root.has("regimes")) throw ConfigError("regimes is required");
  cfg.regimes = expand_regimes(root.at("regimes"), "regimes");
  if (root.has("output_dir")) {
    std::string out;
    root.read("output_dir", out);
    cfg.output_dir = out;
  }
  root.read("seed", cfg.seed);
  root.read("cega_svg", cfg.cega_svg);
  root.finish();

  cfg.federated.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(doc, path.parent_path());
}

namespace {

json train_json(const nn::TrainConfig& t) {
  return {{"learning_rate", t.learning_rate},
          {"batch_size", t.batch_size},
          {"max_epochs", t.max_epochs},
          {"patience", t.patience}};
}

}  // namespace

json to_json(const RunConfig& cfg) {
  json j;
  if (cfg.data.csv) {
    j["data"] = {{"csv", cfg.data.csv->generic_string()}};
  } else {
    const auto& s = *cfg.data.synthetic;
    j["data"] = {{"synthetic",
                  {{"patients", s.n_patients},
                   {"days", s.days_per_patient},
                   {"hypo", s.target_hypo_fraction},
                   {"hyper", s.target_hyper_fraction},
                   {"seed", s.rng_seed},
                   {"missing", s.missing_fraction}}}};
  }
  j["window"] = {{"wl", cfg.window.wl}, {"ph", cfg.window.ph}, {"max_gap", cfg.max_gap}};
  j["folds"] = {{"k", cfg.folds}, {"use", cfg.fold_list()}};
  j["train"] = train_json(cfg.local_train);
  j["central_train"] = train_json(cfg.central_train);
  const auto& f = cfg.federated;
  j["federated"] = {{"rounds", f.rounds},
                    {"local_epochs", f.local_epochs},
                    {"batch_size", f.batch_size},
                    {"client_lr", f.client_lr},
                    {"server_lr", f.server_lr},
                    {"finetune_epochs", f.finetune_epochs},
                    {"finetune_patience", f.finetune_patience},
                    {"checkpoint_every", cfg.checkpoint_every}};
  json loss = {{"loss", cfg.hh_enabled ? "hh" : "mse"}};
  if (cfg.hh_enabled) {
    if (cfg.alpha) {
      loss["alpha"] = *cfg.alpha;
    } else {
      loss["alpha_grid"] = cfg.alpha_grid;
      loss["personal_alpha_grid"] = cfg.personal_alpha_grid;
    }
  }
  j["loss"] = loss;
  j["regimes"] = cfg.regimes;
  j["output_dir"] = cfg.output_dir.generic_string();
  j["seed"] = cfg.seed;
  j["cega_svg"] = cfg.cega_svg;
  return j;
}

}  // namespace fedglu::config
