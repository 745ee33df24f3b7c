#include "toolgate/schema.hpp"

#include <sstream>

namespace toolgate {

namespace {

bool matches_type(const json& value, const std::string& type) {
    if (type == "string") return value.is_string();
    if (type == "number") return value.is_number();
    if (type == "integer")
        return value.is_number_integer() || value.is_number_unsigned();
    if (type == "boolean") return value.is_boolean();
    if (type == "object") return value.is_object();
    if (type == "array") return value.is_array();
    if (type == "null") return value.is_null();
    return true;  // unknown type names are not enforced
}

std::string type_of(const json& value) {
    switch (value.type()) {
        case json::value_t::string: return "string";
        case json::value_t::boolean: return "boolean";
        case json::value_t::number_integer:
        case json::value_t::number_unsigned: return "integer";
        case json::value_t::number_float: return "number";
        case json::value_t::object: return "object";
        case json::value_t::array: return "array";
        case json::value_t::null: return "null";
        default: return "unknown";
    }
}

void validate_node(const json& value, const json& schema, const std::string& path,
                   std::vector<FieldError>& errors) {
    if (!schema.is_object()) return;  // true/empty schema accepts everything

    if (const auto it = schema.find("type"); it != schema.end()) {
        bool ok = false;
        if (it->is_string()) {
            ok = matches_type(value, it->get<std::string>());
        } else if (it->is_array()) {
            for (const auto& t : *it)
                if (t.is_string() && matches_type(value, t.get<std::string>())) {
                    ok = true;
                    break;
                }
        } else {
            ok = true;
        }
        if (!ok) {
            errors.push_back({path, "expected type " + it->dump() + ", got " + type_of(value)});
            return;  // deeper checks would only produce noise
        }
    }

    if (const auto it = schema.find("enum"); it != schema.end() && it->is_array()) {
        bool found = false;
        for (const auto& candidate : *it)
            if (candidate == value) {
                found = true;
                break;
            }
        if (!found) errors.push_back({path, "value not in enum " + it->dump()});
    }
    if (const auto it = schema.find("const"); it != schema.end()) {
        if (*it != value) errors.push_back({path, "value does not equal const " + it->dump()});
    }

    if (value.is_number()) {
        const double v = value.get<double>();
        if (const auto it = schema.find("minimum"); it != schema.end() && it->is_number() &&
                                                    v < it->get<double>())
            errors.push_back({path, "value below minimum " + it->dump()});
        if (const auto it = schema.find("maximum"); it != schema.end() && it->is_number() &&
                                                    v > it->get<double>())
            errors.push_back({path, "value above maximum " + it->dump()});
    }
    if (value.is_string()) {
        const auto len = value.get_ref<const std::string&>().size();
        if (const auto it = schema.find("minLength");
            it != schema.end() && it->is_number_unsigned() && len < it->get<std::size_t>())
            errors.push_back({path, "string shorter than minLength " + it->dump()});
        if (const auto it = schema.find("maxLength");
            it != schema.end() && it->is_number_unsigned() && len > it->get<std::size_t>())
            errors.push_back({path, "string longer than maxLength " + it->dump()});
    }

    if (value.is_object()) {
        const json& properties = schema.value("properties", json::object());
        for (const auto& r : schema.value("required", json::array())) {
            if (r.is_string() && !value.contains(r.get<std::string>()))
                errors.push_back({path + "." + r.get<std::string>(),
                                  "missing required property '" + r.get<std::string>() + "'"});
        }
        for (const auto& [key, child] : value.items()) {
            const auto prop = properties.find(key);
            if (prop != properties.end()) {
                validate_node(child, *prop, path + "." + key, errors);
                continue;
            }
            const auto extra = schema.find("additionalProperties");
            if (extra != schema.end()) {
                if (extra->is_boolean() && !extra->get<bool>()) {
                    errors.push_back({path + "." + key, "unexpected property '" + key + "'"});
                } else if (extra->is_object()) {
                    validate_node(child, *extra, path + "." + key, errors);
                }
            }
        }
    }

    if (value.is_array()) {
        if (const auto it = schema.find("items"); it != schema.end() && it->is_object()) {
            std::size_t i = 0;
            for (const auto& item : value) {
                validate_node(item, *it, path + "[" + std::to_string(i) + "]", errors);
                ++i;
            }
        }
        if (const auto it = schema.find("minItems");
            it != schema.end() && it->is_number_unsigned() && value.size() < it->get<std::size_t>())
            errors.push_back({path, "array shorter than minItems " + it->dump()});
        if (const auto it = schema.find("maxItems");
            it != schema.end() && it->is_number_unsigned() && value.size() > it->get<std::size_t>())
            errors.push_back({path, "array longer than maxItems " + it->dump()});
    }
}

}  // namespace

std::vector<FieldError> validate_against_schema(const json& value, const json& schema) {
    std::vector<FieldError> errors;
    validate_node(value, schema, "$", errors);
    return errors;
}

std::string format_field_errors(const std::vector<FieldError>& errors) {
    std::ostringstream out;
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (i) out << "; ";
        out << errors[i].path << ": " << errors[i].message;
    }
    return out.str();
}

}  // namespace toolgate
