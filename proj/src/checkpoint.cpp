#include "fedglu/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "fedglu/errors.hpp"
#include "json.hpp"

namespace fedglu::nn {

namespace {

void put(std::ostream& out, double v) {
  char buf[32];
  const int len = std::snprintf(buf, sizeof(buf), "%.17g", v);
  out.write(buf, len);
}

template <typename Range>
void put_array(std::ostream& out, const Range& values) {
  out << '[';
  bool first = true;
  for (double v : values) {
    if (!first) out << ',';
    put(out, v);
    first = false;
  }
  out << ']';
}

std::vector<double> to_doubles(const nlohmann::json& j, const char* what) {
  if (!j.is_array()) throw DataError(std::string("checkpoint field '") + what + "' must be an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw DataError(std::string("checkpoint field '") + what + "' holds a non-number");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

void write_checkpoint(std::ostream& out, const MlpModel& model, const AdamState* optimizer) {
  out << "{\"arch\":[";
  for (std::size_t i = 0; i < model.dims().size(); ++i) out << (i ? "," : "") << model.dims()[i];
  out << "],\"layers\":[";
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    if (l) out << ',';
    out << "{\"w\":[";
    const auto w = model.weights(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      if (r) out << ',';
      put_array(out, std::span<const double>(w.data() + r * w.cols(), static_cast<std::size_t>(w.cols())));
    }
    out << "],\"b\":";
    const auto b = model.bias(l);
    put_array(out, std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
    out << '}';
  }
  out << ']';
  if (optimizer) {
    out << ",\"optimizer\":{\"t\":" << optimizer->t << ",\"beta1\":";
    put(out, optimizer->beta1);
    out << ",\"beta2\":";
    put(out, optimizer->beta2);
    out << ",\"eps\":";
    put(out, optimizer->eps);
    out << ",\"m\":";
    put_array(out, optimizer->m);
    out << ",\"v\":";
    put_array(out, optimizer->v);
    out << '}';
  }
  out << "}\n";
}

std::string checkpoint_json(const MlpModel& model, const AdamState* optimizer) {
  std::ostringstream out;
  write_checkpoint(out, model, optimizer);
  return out.str();
}

Checkpoint read_checkpoint(std::istream& in) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (!doc.contains("arch") || !doc.contains("layers")) throw DataError("checkpoint lacks 'arch' or 'layers'");
  std::vector<int> dims;
  for (const auto& d : doc["arch"]) dims.push_back(d.get<int>());
  MlpModel model(dims);
  const auto& layers = doc["layers"];
  if (!layers.is_array() || layers.size() != model.num_layers()) {
    throw DimensionMismatch("checkpoint layer count does not match its architecture");
  }
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    auto w = model.weights(l);
    const auto& rows = layers[l].at("w");
    if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != w.rows()) {
      throw DimensionMismatch("checkpoint layer " + std::to_string(l) + " has the wrong number of rows");
    }
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      const auto row = to_doubles(rows[static_cast<std::size_t>(r)], "w");
      if (static_cast<Eigen::Index>(row.size()) != w.cols()) {
        throw DimensionMismatch("checkpoint layer " + std::to_string(l) + " has the wrong number of columns");
      }
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = row[static_cast<std::size_t>(c)];
    }
    const auto b = to_doubles(layers[l].at("b"), "b");
    if (static_cast<Eigen::Index>(b.size()) != model.bias(l).size()) {
      throw DimensionMismatch("checkpoint layer " + std::to_string(l) + " has the wrong bias length");
    }
    model.bias(l) = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  }

  Checkpoint ck{std::move(model), std::nullopt};
  if (doc.contains("optimizer") && !doc["optimizer"].is_null()) {
    const auto& o = doc["optimizer"];
    AdamState s;
    s.t = o.at("t").get<std::int64_t>();
    s.beta1 = o.at("beta1").get<double>();
    s.beta2 = o.at("beta2").get<double>();
    s.eps = o.at("eps").get<double>();
    s.m = to_doubles(o.at("m"), "m");
    s.v = to_doubles(o.at("v"), "v");
    if (s.m.size() != ck.model.param_count() || s.v.size() != ck.model.param_count()) {
      throw DimensionMismatch("optimizer state length does not match the model");
    }
    ck.optimizer = std::move(s);
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const MlpModel& model, const AdamState* optimizer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write '" + path.string() + "'");
  write_checkpoint(out, model, optimizer);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifacts("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

}  // namespace fedglu::nn
