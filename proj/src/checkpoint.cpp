// SPDX-License-Identifier: Apache-2.0
#include "fairprep/checkpoint.hpp"

#include <fstream>

namespace fairprep {

nlohmann::json to_json(const DenseNet& net) {
  nlohmann::json doc;
  doc["format"] = "fairprep.densenet";
  doc["version"] = kCheckpointVersion;
  std::vector<std::size_t> widths{net.input_width()};
  std::vector<std::string> acts;
  for (const auto& l : net.layers()) {
    widths.push_back(l.out);
    acts.push_back(to_string(l.activation));
  }
  doc["widths"] = widths;
  doc["activations"] = acts;
  doc["dropout"] = net.dropout_rate();
  doc["seed"] = net.seed();
  doc["rng_state"] = net.rng().state();
  doc["params"] = std::vector<double>(net.parameters().begin(), net.parameters().end());
  return doc;
}

DenseNet densenet_from_json(const nlohmann::json& doc) {
  if (doc.value("format", "") != "fairprep.densenet") throw InputError("checkpoint: not a fairprep.densenet document");
  if (doc.value("version", 0) != kCheckpointVersion) throw InputError("checkpoint: unsupported version");
  std::vector<Activation> acts;
  for (const auto& a : doc.at("activations")) acts.push_back(activation_from_string(a.get<std::string>()));
  return densenet_from_parts(doc.at("widths").get<std::vector<std::size_t>>(), std::move(acts),
                             doc.at("dropout").get<double>(), doc.at("seed").get<std::uint64_t>(),
                             doc.at("params").get<std::vector<double>>(), doc.value("rng_state", ""));
}

void save_json(const nlohmann::json& doc, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

nlohmann::json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

}  // namespace fairprep
