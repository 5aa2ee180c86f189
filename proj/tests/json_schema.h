// Copyright 2026 The noptc Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// JSON Schema validation for the keywords docs/report.schema.json uses:
// type, const, enum, required, properties, additionalProperties (bool),
// items, minimum, exclusiveMinimum, minLength. Anything else is an error so
// the schema cannot silently outgrow the checker.

#ifndef NOPTC_TESTS_JSON_SCHEMA_H_
#define NOPTC_TESTS_JSON_SCHEMA_H_

#include <json.hpp>

#include <set>
#include <string>
#include <vector>

namespace noptc::testing {

inline bool json_has_type(const nlohmann::json& v, const std::string& type) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  if (type == "null") return v.is_null();
  return false;
}

// Appends one message per violation to `errors`.
inline void validate_json(const nlohmann::json& v, const nlohmann::json& schema,
                          const std::string& path, std::vector<std::string>& errors) {
  static const std::set<std::string> kKnown = {
      "$schema", "$id", "title", "description", "type", "const", "enum", "required",
      "properties", "additionalProperties", "items", "minimum", "exclusiveMinimum", "minLength"};
  for (const auto& [key, _] : schema.items()) {
    if (!kKnown.contains(key)) errors.push_back(path + ": unsupported keyword " + key);
  }
  auto fail = [&](const std::string& msg) { errors.push_back(path + ": " + msg); };
  if (schema.contains("type") && !json_has_type(v, schema["type"])) {
    fail("expected " + schema["type"].get<std::string>());
    return;
  }
  if (schema.contains("const") && v != schema["const"]) fail("expected " + schema["const"].dump());
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& e : schema["enum"]) found = found || e == v;
    if (!found) fail("not in enum");
  }
  if (v.is_number()) {
    const double x = v.get<double>();
    if (schema.contains("minimum") && x < schema["minimum"].get<double>()) fail("below minimum");
    if (schema.contains("exclusiveMinimum") && x <= schema["exclusiveMinimum"].get<double>()) {
      fail("not above exclusiveMinimum");
    }
  }
  if (v.is_string() && schema.contains("minLength") &&
      v.get<std::string>().size() < schema["minLength"].get<size_t>()) {
    fail("too short");
  }
  if (v.is_object()) {
    for (const auto& r : schema.value("required", nlohmann::json::array())) {
      if (!v.contains(r.get<std::string>())) fail("missing " + r.get<std::string>());
    }
    const auto props = schema.value("properties", nlohmann::json::object());
    for (const auto& [key, child] : v.items()) {
      if (props.contains(key)) {
        validate_json(child, props[key], path + "." + key, errors);
      } else if (schema.contains("additionalProperties") && !schema["additionalProperties"]) {
        fail("unexpected key " + key);
      }
    }
  }
  if (v.is_array() && schema.contains("items")) {
    for (size_t i = 0; i < v.size(); ++i) {
      validate_json(v[i], schema["items"], path + "[" + std::to_string(i) + "]", errors);
    }
  }
}

inline std::vector<std::string> validate_json(const nlohmann::json& v,
                                              const nlohmann::json& schema) {
  std::vector<std::string> errors;
  validate_json(v, schema, "$", errors);
  return errors;
}

}  // namespace noptc::testing

#endif  // NOPTC_TESTS_JSON_SCHEMA_H_
