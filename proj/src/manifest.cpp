#include "fedglu/manifest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <memory>

#include "fedglu/errors.hpp"

#ifndef FEDGLU_VERSION
#define FEDGLU_VERSION "unknown"
#endif

namespace fedglu::manifest {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw RuntimeFailure("cannot initialize SHA-256");
    }
  }
  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw RuntimeFailure("SHA-256 update failed");
  }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), md, &len) != 1) throw RuntimeFailure("SHA-256 finalization failed");
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(digits[md[i] >> 4]);
      out.push_back(digits[md[i] & 0xF]);
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifacts("cannot read " + path.string());
  Sha256 h;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

json build_manifest(const fs::path& run_dir, const json& config,
                    const std::vector<std::pair<std::string, double>>& stage_seconds) {
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), run_dir).generic_string();
    if (rel == kManifestName) continue;
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end());

  json inventory = json::array();
  for (const auto& rel : files) {
    const auto p = run_dir / rel;
    inventory.push_back({{"path", rel}, {"sha256", sha256_file(p)}, {"bytes", fs::file_size(p)}});
  }
  json stages = json::array();
  for (const auto& [name, secs] : stage_seconds) stages.push_back({{"stage", name}, {"seconds", secs}});
  return {{"version", FEDGLU_VERSION}, {"config", config}, {"stages", stages}, {"files", inventory}};
}

void write_manifest(const fs::path& run_dir, const json& manifest) {
  std::ofstream out(run_dir / kManifestName, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + (run_dir / kManifestName).string());
  out << manifest.dump(2) << '\n';
}

VerifyResult verify_manifest(const fs::path& run_dir) {
  std::ifstream in(run_dir / kManifestName);
  if (!in) throw MissingArtifacts("no " + std::string(kManifestName) + " in " + run_dir.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::parse_error& e) {
    throw MissingArtifacts(std::string(kManifestName) + " is not valid JSON: " + e.what());
  }
  VerifyResult res;
  for (const auto& f : m.at("files")) {
    const auto rel = f.at("path").get<std::string>();
    const auto p = run_dir / rel;
    ++res.checked;
    if (!fs::is_regular_file(p)) {
      res.problems.push_back(rel + ": missing");
      continue;
    }
    if (sha256_file(p) != f.at("sha256").get<std::string>()) res.problems.push_back(rel + ": hash mismatch");
  }
  return res;
}

}  // namespace fedglu::manifest
