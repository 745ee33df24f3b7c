#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace toolgate {

using json = nlohmann::json;

struct FieldError {
    std::string path;  // JSON-pointer-ish location, "$" for the root
    std::string message;
};

// Validates a value against the JSON-Schema subset used by compiled tool
// argument schemas: type (string or list), enum, const, properties,
// required, items, additionalProperties, and numeric/string bounds.
// Standard semantics: properties not listed in the schema are allowed
// unless additionalProperties forbids them.
std::vector<FieldError> validate_against_schema(const json& value, const json& schema);

inline bool schema_accepts(const json& value, const json& schema) {
    return validate_against_schema(value, schema).empty();
}

std::string format_field_errors(const std::vector<FieldError>& errors);

}  // namespace toolgate
