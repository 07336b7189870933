#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedglu/cgm_data.hpp"
#include "fedglu/federated.hpp"
#include "fedglu/nn.hpp"
#include "fedglu/synthetic.hpp"

namespace fedglu::config {

/// Frozen regime identifiers; report consumers key on these strings.
inline constexpr const char* kLocalMse = "local_mse";
inline constexpr const char* kLocalHh = "local_hh";
inline constexpr const char* kCentralMse = "central_mse";
inline constexpr const char* kCentralHh = "central_hh";
inline constexpr const char* kFedGlobal = "fed_global";
inline constexpr const char* kFedGlu = "fedglu";

/// All regimes in execution order.
const std::vector<std::string>& all_regimes();

struct DataSource {
  std::optional<std::filesystem::path> csv;
  std::optional<cgm::SyntheticCohortSpec> synthetic;
};

struct RunConfig {
  DataSource data;
  cgm::WindowConfig window;
  int max_gap = 6;
  int folds = 5;
  std::vector<int> use_folds;  // 1-based; empty means every fold

  nn::TrainConfig local_train;
  nn::TrainConfig central_train;
  fed::FedConfig federated;
  int checkpoint_every = 10;  // rounds between saved snapshots; the last round is always saved

  bool hh_enabled = true;                // false when the loss section says "mse"
  std::optional<double> alpha;           // fixed alpha; otherwise selected on train
  std::vector<double> alpha_grid;        // central selection / sweep
  std::vector<double> personal_alpha_grid;  // per-patient selection (local_hh, fedglu)

  std::vector<std::string> regimes;  // canonical names in execution order
  std::filesystem::path output_dir = "run";
  std::uint64_t seed = 0;
  bool cega_svg = false;

  bool has_regime(const std::string& name) const;
  /// Folds to run, 1-based, ascending.
  std::vector<int> fold_list() const;
  void validate() const;
};

/// Parses and validates a config document. Unknown keys and bad values
/// raise ConfigError naming the field path. Relative csv paths resolve
/// against `base_dir`.
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Fully resolved config, every default spelled out.
nlohmann::json to_json(const RunConfig& cfg);

}  // namespace fedglu::config
