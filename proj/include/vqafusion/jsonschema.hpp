#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace vqaf {

// Structural validator for the subset of JSON Schema the shipped report
// schema uses: "type", "properties", "required", "items". Returns a list
// of violations; empty means valid.
inline void validate_schema_impl(const nlohmann::json& value,
                                 const nlohmann::json& schema,
                                 const std::string& path,
                                 std::vector<std::string>& problems) {
  if (schema.contains("type")) {
    const std::string type = schema["type"].get<std::string>();
    bool ok = false;
    if (type == "object") ok = value.is_object();
    else if (type == "array") ok = value.is_array();
    else if (type == "string") ok = value.is_string();
    else if (type == "number") ok = value.is_number();
    else if (type == "integer") ok = value.is_number_integer() ||
                                      value.is_number_unsigned();
    else if (type == "boolean") ok = value.is_boolean();
    if (!ok) {
      problems.push_back(path + ": expected " + type);
      return;
    }
  }
  if (schema.contains("required")) {
    for (const auto& key : schema["required"])
      if (!value.contains(key.get<std::string>()))
        problems.push_back(path + ": missing required key '" +
                           key.get<std::string>() + "'");
  }
  if (schema.contains("properties") && value.is_object()) {
    for (const auto& [key, sub] : schema["properties"].items())
      if (value.contains(key))
        validate_schema_impl(value[key], sub, path + "." + key, problems);
  }
  if (schema.contains("items") && value.is_array()) {
    for (std::size_t i = 0; i < value.size(); ++i)
      validate_schema_impl(value[i], schema["items"],
                           path + "[" + std::to_string(i) + "]", problems);
  }
}

inline std::vector<std::string> validate_schema(const nlohmann::json& value,
                                                const nlohmann::json& schema) {
  std::vector<std::string> problems;
  validate_schema_impl(value, schema, "$", problems);
  return problems;
}

}  // namespace vqaf
