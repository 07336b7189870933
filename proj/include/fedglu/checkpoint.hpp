#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "fedglu/nn.hpp"

namespace fedglu::nn {

struct Checkpoint {
  MlpModel model;
  std::optional<AdamState> optimizer;
};

/// JSON: {"arch": [...], "layers": [{"w": [[...]], "b": [...]}, ...],
/// "optimizer": {...}}. Doubles are written with 17 significant digits so
/// a reload is bit-exact.
void write_checkpoint(std::ostream& out, const MlpModel& model, const AdamState* optimizer = nullptr);
std::string checkpoint_json(const MlpModel& model, const AdamState* optimizer = nullptr);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const MlpModel& model, const AdamState* optimizer = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fedglu::nn
