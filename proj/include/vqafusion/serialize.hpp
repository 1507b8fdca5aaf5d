#pragma once

#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "vqafusion/fusion.hpp"

namespace vqaf {

// Parameter files are JSON lines: one object per parameter with name,
// shape, dtype and the values in row-major order. nlohmann serializes
// doubles shortest-round-trip, so f64 values survive a save/load exactly.
template <typename T>
void save_params(const FusionModule<T>& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& [name, t] : m.params) {
    nlohmann::ordered_json j;
    j["name"] = name;
    j["shape"] = t.shape();
    j["dtype"] = dtype_name<T>();
    j["values"] = t.values();
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

template <typename T>
std::map<std::string, Tensor<T>> load_param_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::map<std::string, Tensor<T>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    Shape shape = j.at("shape").get<Shape>();
    std::vector<T> values = j.at("values").get<std::vector<T>>();
    out.emplace(j.at("name").get<std::string>(),
                Tensor<T>(std::move(shape), std::move(values)));
  }
  return out;
}

// Replace matching parameters in-place; every file entry must name an
// existing parameter of identical shape.
template <typename T>
void load_params(FusionModule<T>& m, const std::string& path) {
  auto loaded = load_param_map<T>(path);
  for (auto& [name, tensor] : loaded) {
    auto it = m.params.find(name);
    if (it == m.params.end())
      throw ValidationError("parameter '" + name + "' not present in module");
    if (!it->second.same_shape(tensor))
      throw ValidationError("parameter '" + name + "' shape mismatch: " +
                            shape_str(it->second.shape()) + " vs " +
                            shape_str(tensor.shape()));
    it->second = std::move(tensor);
  }
}

}  // namespace vqaf
