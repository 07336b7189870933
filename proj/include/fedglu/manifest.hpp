#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace fedglu::manifest {

inline constexpr const char* kManifestName = "manifest.json";

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Inventory of every regular file under `run_dir` (except the manifest
/// itself) with SHA-256 and size, plus the config snapshot, the program
/// version and per-stage wall-clock seconds.
nlohmann::json build_manifest(const std::filesystem::path& run_dir, const nlohmann::json& config,
                              const std::vector<std::pair<std::string, double>>& stage_seconds);

void write_manifest(const std::filesystem::path& run_dir, const nlohmann::json& manifest);

struct VerifyResult {
  std::size_t checked = 0;
  std::vector<std::string> problems;

  bool ok() const { return problems.empty(); }
};

/// Re-hashes every file listed in the manifest. Throws MissingArtifacts
/// when the manifest itself is absent or unreadable.
VerifyResult verify_manifest(const std::filesystem::path& run_dir);

}  // namespace fedglu::manifest
