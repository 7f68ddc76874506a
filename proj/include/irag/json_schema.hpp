#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace irag {

/// Validates `instance` against a JSON Schema (draft 2020-12). Supports the
/// keyword subset the shipped schemas use: type, const, enum, required,
/// properties, additionalProperties (boolean), items, min/maxItems,
/// min/maxLength, pattern, minimum, maximum, if/then/else. Unknown keywords
/// are ignored. Returns one message per violation, prefixed by a JSON pointer.
std::vector<std::string> validate_json_schema(const nlohmann::json& schema,
                                              const nlohmann::json& instance);

/// Validates against the bundled `schema/explanation-result.schema.json`.
std::vector<std::string> validate_explanation_json(const nlohmann::json& instance);

}  // namespace irag
