#include "toolgate/openapi.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>

#include <yaml-cpp/yaml.h>

#include "toolgate/errors.hpp"

namespace toolgate {

namespace {

const std::array<std::string, 7> kMethods = {"get",  "post",    "put",  "patch",
                                             "delete", "head", "options"};

bool is_http_method(const std::string& key) {
    return std::find(kMethods.begin(), kMethods.end(), key) != kMethods.end();
}

// Header names that carry credentials; these are executor configuration,
// never agent-visible arguments.
bool is_auth_header(std::string lower) {
    return lower == "authorization" || lower == "proxy-authorization" ||
           lower == "x-api-key" || lower == "api-key" || lower == "cookie";
}

std::string to_lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

json yaml_node_to_json(const YAML::Node& node) {
    switch (node.Type()) {
        case YAML::NodeType::Null:
            return nullptr;
        case YAML::NodeType::Scalar: {
            // Untagged scalars need type inference; quoted scalars stay strings.
            if (node.Tag() == "!") return node.as<std::string>();
            const std::string& s = node.Scalar();
            if (s == "null" || s == "~" || s == "Null" || s == "NULL") return nullptr;
            if (s == "true" || s == "True" || s == "TRUE") return true;
            if (s == "false" || s == "False" || s == "FALSE") return false;
            try {
                std::size_t pos = 0;
                if (!s.empty() && s.find_first_not_of("+-0123456789") == std::string::npos) {
                    const long long v = std::stoll(s, &pos);
                    if (pos == s.size()) return v;
                }
                if (!s.empty() &&
                    s.find_first_not_of("+-0123456789.eE") == std::string::npos &&
                    s.find_first_of("0123456789") != std::string::npos) {
                    const double d = std::stod(s, &pos);
                    if (pos == s.size()) return d;
                }
            } catch (const std::exception&) {
                // fall through to string
            }
            return s;
        }
        case YAML::NodeType::Sequence: {
            json arr = json::array();
            for (const auto& item : node) arr.push_back(yaml_node_to_json(item));
            return arr;
        }
        case YAML::NodeType::Map: {
            json obj = json::object();
            for (const auto& kv : node) obj[kv.first.as<std::string>()] = yaml_node_to_json(kv.second);
            return obj;
        }
        default:
            return nullptr;
    }
}

// Looks up a JSON pointer within `root`, e.g. #/components/schemas/User.
const json* resolve_pointer(const json& root, const std::string& ref) {
    if (ref.empty() || ref[0] != '#') return nullptr;
    const json* node = &root;
    std::size_t pos = 1;
    while (pos < ref.size()) {
        if (ref[pos] != '/') return nullptr;
        std::size_t next = ref.find('/', pos + 1);
        std::string token = ref.substr(pos + 1, next == std::string::npos
                                                    ? std::string::npos
                                                    : next - pos - 1);
        // RFC 6901 escapes
        std::string key;
        for (std::size_t i = 0; i < token.size(); ++i) {
            if (token[i] == '~' && i + 1 < token.size()) {
                key.push_back(token[i + 1] == '0' ? '~' : '/');
                ++i;
            } else {
                key.push_back(token[i]);
            }
        }
        if (node->is_object()) {
            auto it = node->find(key);
            if (it == node->end()) return nullptr;
            node = &*it;
        } else if (node->is_array()) {
            try {
                const std::size_t idx = std::stoul(key);
                if (idx >= node->size()) return nullptr;
                node = &(*node)[idx];
            } catch (const std::exception&) {
                return nullptr;
            }
        } else {
            return nullptr;
        }
        pos = next == std::string::npos ? ref.size() : next;
    }
    return node;
}

constexpr int kMaxRefDepth = 64;

json resolve_refs(const json& node, const json& root, int depth) {
    if (depth > kMaxRefDepth)
        throw Error(Error::Kind::structural,
                    "$ref resolution exceeded depth limit (circular reference?)");
    if (node.is_object()) {
        auto ref_it = node.find("$ref");
        if (ref_it != node.end() && ref_it->is_string()) {
            const std::string ref = ref_it->get<std::string>();
            if (ref.empty() || ref[0] != '#')
                throw Error(Error::Kind::structural,
                            "external $ref is not supported: " + ref);
            const json* target = resolve_pointer(root, ref);
            if (!target)
                throw Error(Error::Kind::structural, "unresolvable $ref: " + ref);
            return resolve_refs(*target, root, depth + 1);
        }
        json out = json::object();
        for (const auto& [key, value] : node.items())
            out[key] = resolve_refs(value, root, depth);
        return out;
    }
    if (node.is_array()) {
        json out = json::array();
        for (const auto& item : node) out.push_back(resolve_refs(item, root, depth));
        return out;
    }
    return node;
}

// Extracts {param} segment names; malformed braces raise a structural error.
std::vector<std::string> path_template_params(const std::string& path) {
    std::vector<std::string> names;
    std::size_t pos = 0;
    while (pos < path.size()) {
        if (path[pos] == '{') {
            const std::size_t end = path.find('}', pos);
            if (end == std::string::npos)
                throw Error(Error::Kind::structural, "unclosed '{' in path template: " + path);
            std::string name = path.substr(pos + 1, end - pos - 1);
            if (name.empty() || name.find('{') != std::string::npos)
                throw Error(Error::Kind::structural, "malformed path parameter in: " + path);
            names.push_back(std::move(name));
            pos = end + 1;
        } else if (path[pos] == '}') {
            throw Error(Error::Kind::structural, "stray '}' in path template: " + path);
        } else {
            ++pos;
        }
    }
    return names;
}

// Merges path-level parameters into each operation; operation-level wins
// on the (name, in) key.
json merged_parameters(const json& path_item, const json& op) {
    json out = json::array();
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& p : op.value("parameters", json::array())) {
        if (!p.is_object()) continue;
        seen.insert({p.value("name", ""), p.value("in", "")});
        out.push_back(p);
    }
    for (const auto& p : path_item.value("parameters", json::array())) {
        if (!p.is_object()) continue;
        if (!seen.count({p.value("name", ""), p.value("in", "")})) out.push_back(p);
    }
    return out;
}

const json* pick_json_body_schema(const json& request_body, std::string* media_out) {
    auto content_it = request_body.find("content");
    if (content_it == request_body.end() || !content_it->is_object()) return nullptr;
    // Prefer application/json, then any +json / */json media type.
    auto exact = content_it->find("application/json");
    if (exact != content_it->end()) {
        *media_out = "application/json";
        auto s = exact->find("schema");
        return s != exact->end() ? &*s : nullptr;
    }
    for (const auto& [media, body] : content_it->items()) {
        if (media.find("json") != std::string::npos) {
            *media_out = media;
            auto s = body.find("schema");
            return s != body.end() ? &*s : nullptr;
        }
    }
    return nullptr;
}

}  // namespace

json yaml_to_json(const std::string& text) {
    try {
        YAML::Node root = YAML::Load(text);
        return yaml_node_to_json(root);
    } catch (const YAML::ParserException& e) {
        throw Error(Error::Kind::parse,
                    "YAML parse error at line " + std::to_string(e.mark.line + 1) +
                        ", column " + std::to_string(e.mark.column + 1) + ": " + e.msg);
    } catch (const YAML::Exception& e) {
        throw Error(Error::Kind::parse, std::string("YAML error: ") + e.what());
    }
}

SpecFormat format_for_path(const std::string& path) {
    const auto dot = path.rfind('.');
    if (dot != std::string::npos) {
        const std::string ext = to_lower(path.substr(dot + 1));
        if (ext == "yaml" || ext == "yml") return SpecFormat::yaml;
    }
    return SpecFormat::json;
}

ApiDocument parse_document(const std::string& text, SpecFormat format) {
    json root;
    if (format == SpecFormat::json) {
        try {
            root = json::parse(text);
        } catch (const json::parse_error& e) {
            throw Error(Error::Kind::parse, std::string("JSON parse error: ") + e.what());
        }
    } else {
        root = yaml_to_json(text);
    }
    if (!root.is_object())
        throw Error(Error::Kind::structural, "document root must be an object");

    ApiDocument doc;

    const std::string openapi_version = root.value("openapi", "");
    if (openapi_version.empty()) {
        if (root.contains("swagger"))
            throw Error(Error::Kind::structural,
                        "Swagger 2.0 documents are not supported; convert to OpenAPI 3.x");
        doc.warnings.push_back("document has no 'openapi' version field");
    } else if (openapi_version.rfind("3.", 0) != 0) {
        throw Error(Error::Kind::structural,
                    "unsupported OpenAPI version: " + openapi_version + " (expected 3.x)");
    }

    if (const auto info = root.find("info"); info != root.end() && info->is_object()) {
        doc.title = info->value("title", "");
        doc.version = info->value("version", "");
    }
    for (const auto& server : root.value("servers", json::array())) {
        if (server.is_object() && server.contains("url"))
            doc.servers.push_back(server["url"].get<std::string>());
    }

    auto paths_it = root.find("paths");
    if (paths_it == root.end())
        throw Error(Error::Kind::structural, "document has no 'paths' section");
    if (!paths_it->is_object())
        throw Error(Error::Kind::structural, "'paths' must be an object");

    for (const auto& [path, raw_item] : paths_it->items()) {
        if (path.empty() || path[0] != '/') {
            doc.warnings.push_back("skipping non-path key in paths: " + path);
            continue;
        }
        if (!raw_item.is_object()) {
            doc.warnings.push_back("skipping non-object path item: " + path);
            continue;
        }
        const json path_item = resolve_refs(raw_item, root, 0);
        const auto declared = path_template_params(path);

        for (const auto& [key, value] : path_item.items()) {
            if (!is_http_method(key)) {
                if (key != "parameters" && key != "summary" && key != "description" &&
                    key != "servers")
                    doc.warnings.push_back("ignoring unsupported key '" + key +
                                           "' in path item " + path);
                continue;
            }
            if (!value.is_object()) {
                doc.warnings.push_back("skipping non-object operation " + key + " " + path);
                continue;
            }
            ApiOperation op;
            op.path = path;
            op.method = key;
            std::transform(op.method.begin(), op.method.end(), op.method.begin(),
                           [](unsigned char c) { return std::toupper(c); });
            op.op = value;
            op.op["parameters"] = merged_parameters(path_item, value);

            // Every {param} in the template must be declared on the operation.
            for (const auto& name : declared) {
                bool found = false;
                for (const auto& p : op.op["parameters"]) {
                    if (p.value("in", "") == "path" && p.value("name", "") == name) {
                        found = true;
                        break;
                    }
                }
                if (!found)
                    throw Error(Error::Kind::structural,
                                "path parameter '" + name + "' of " + op.method + " " + path +
                                    " is not declared in the operation");
            }
            doc.operations.push_back(std::move(op));
        }
    }

    std::sort(doc.operations.begin(), doc.operations.end(),
              [](const ApiOperation& a, const ApiOperation& b) {
                  return a.path != b.path ? a.path < b.path : a.method < b.method;
              });
    return doc;
}

std::string derive_tool_name(const ApiOperation& op, const std::string& service) {
    const std::string service_part = sanitize_identifier(service);
    std::string name;
    const std::string operation_id = op.op.value("operationId", "");
    if (!operation_id.empty() && !sanitize_identifier(operation_id).empty()) {
        name = service_part + "_" + sanitize_identifier(operation_id);
    } else {
        std::string path_part;
        std::string segment;
        for (char c : op.path) {
            if (c == '/') {
                if (!segment.empty()) {
                    if (!path_part.empty()) path_part += "_";
                    path_part += sanitize_identifier(segment);
                    segment.clear();
                }
            } else if (c != '{' && c != '}') {
                segment.push_back(c);
            }
        }
        if (!segment.empty()) {
            if (!path_part.empty()) path_part += "_";
            path_part += sanitize_identifier(segment);
        }
        name = service_part + "_" + to_lower(op.method);
        if (!path_part.empty()) name += "_" + path_part;
    }
    if (name.size() > kMaxToolNameLength) name.resize(kMaxToolNameLength);
    while (!name.empty() && name.back() == '_') name.pop_back();
    return name;
}

FlattenedArgs flatten_parameters(const ApiOperation& op) {
    FlattenedArgs out;
    out.schema = {{"type", "object"}, {"properties", json::object()}};
    json& properties = out.schema["properties"];
    std::vector<std::string> required;

    const auto declared = path_template_params(op.path);
    std::set<std::string> declared_params;
    for (const auto& p : op.op.value("parameters", json::array())) {
        if (!p.is_object()) continue;
        const std::string name = p.value("name", "");
        const std::string in = p.value("in", "");
        if (name.empty()) continue;
        declared_params.insert(in + ":" + name);
        ParamLocation loc;
        if (in == "path") {
            loc = ParamLocation::path;
        } else if (in == "query") {
            loc = ParamLocation::query;
        } else if (in == "header") {
            if (is_auth_header(to_lower(name))) continue;
            loc = ParamLocation::header;
        } else {
            continue;  // cookie etc. recorded as warnings at parse time
        }
        json prop = p.value("schema", json::object());
        if (!prop.is_object()) prop = json::object();
        if (p.contains("description") && !prop.contains("description"))
            prop["description"] = p["description"];
        properties[name] = std::move(prop);
        out.params.push_back({name, loc, name});
        if (in == "path" || p.value("required", false)) required.push_back(name);
    }

    for (const auto& name : declared) {
        if (!declared_params.count("path:" + name))
            throw Error(Error::Kind::structural,
                        "path parameter '" + name + "' declared in template " + op.path +
                            " is missing from the operation");
    }

    if (const auto body_it = op.op.find("requestBody"); body_it != op.op.end()) {
        std::string media;
        const json* schema = pick_json_body_schema(*body_it, &media);
        const bool body_required = body_it->value("required", false);
        if (schema && schema->is_object()) {
            const bool object_like = schema->value("type", "") == "object" ||
                                     (!schema->contains("type") && schema->contains("properties"));
            if (object_like) {
                std::set<std::string> body_required_props;
                for (const auto& r : schema->value("required", json::array()))
                    if (r.is_string()) body_required_props.insert(r.get<std::string>());
                for (const auto& [prop_name, prop_schema] :
                     schema->value("properties", json::object()).items()) {
                    std::string arg_name = prop_name;
                    if (properties.contains(arg_name)) arg_name = "body_" + arg_name;
                    properties[arg_name] = prop_schema;
                    out.params.push_back({arg_name, ParamLocation::body, prop_name});
                    if (body_required && body_required_props.count(prop_name))
                        required.push_back(arg_name);
                }
            } else {
                std::string arg_name = "body";
                if (properties.contains(arg_name)) arg_name = "body_body";
                properties[arg_name] = *schema;
                out.params.push_back({arg_name, ParamLocation::body, ""});
                if (body_required) required.push_back(arg_name);
            }
        }
    }

    std::sort(required.begin(), required.end());
    if (!required.empty()) out.schema["required"] = required;
    return out;
}

std::string extract_description(const ApiOperation& op) {
    auto trimmed = [](std::string s) {
        const auto begin = s.find_first_not_of(" \t\r\n");
        if (begin == std::string::npos) return std::string();
        const auto end = s.find_last_not_of(" \t\r\n");
        return s.substr(begin, end - begin + 1);
    };
    const std::string summary = trimmed(op.op.value("summary", ""));
    const std::string description = trimmed(op.op.value("description", ""));
    std::string out = summary;
    if (!summary.empty() && !description.empty()) out += "\n\n";
    out += description;
    if (out.empty()) out = kNoDescriptionPlaceholder;
    return out;
}

std::vector<ToolSpec> compile(const ApiDocument& doc, const std::string& service,
                              const std::string& base_url) {
    std::vector<ToolSpec> specs;
    specs.reserve(doc.operations.size());
    std::map<std::string, const ApiOperation*> taken;

    for (const auto& op : doc.operations) {
        std::string name = derive_tool_name(op, service);
        if (name.empty()) name = sanitize_identifier(service) + "_tool";
        auto it = taken.find(name);
        if (it != taken.end()) {
            const std::string suffix = "_" + short_hash4(op.method + " " + op.path);
            std::string base = name;
            if (base.size() + suffix.size() > kMaxToolNameLength)
                base.resize(kMaxToolNameLength - suffix.size());
            while (!base.empty() && base.back() == '_') base.pop_back();
            name = base + suffix;
            auto collision = taken.find(name);
            if (collision != taken.end()) {
                const ApiOperation* other = collision->second;
                throw Error(Error::Kind::compile,
                            "tool name collision '" + name + "' between " + other->method +
                                " " + other->path + " and " + op.method + " " + op.path);
            }
        }
        taken.emplace(name, &op);

        ToolSpec spec;
        spec.name = name;
        spec.service = service;
        spec.description = extract_description(op);
        FlattenedArgs args = flatten_parameters(op);
        spec.arguments = std::move(args.schema);
        HttpBinding binding;
        binding.method = op.method;
        binding.path_template = op.path;
        binding.base_url = base_url;
        binding.params = std::move(args.params);
        spec.binding = std::move(binding);
        specs.push_back(std::move(spec));
    }
    return specs;
}

}  // namespace toolgate
