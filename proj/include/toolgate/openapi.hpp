#pragma once

#include <string>
#include <vector>

#include "toolgate/tool_spec.hpp"

namespace toolgate {

enum class SpecFormat { json, yaml };

// One (path, method) pair from an API document. `op` is the operation
// object with path-level parameters merged in and all internal $refs
// resolved.
struct ApiOperation {
    std::string path;
    std::string method;  // upper-case
    json op;
};

struct ApiDocument {
    std::string title;
    std::string version;
    std::vector<std::string> servers;
    std::vector<ApiOperation> operations;
    std::vector<std::string> warnings;
};

// Parses an OpenAPI 3.x document. Internal $refs are resolved; external or
// file refs raise a structural error. Unknown constructs are collected as
// warnings on the returned document.
ApiDocument parse_document(const std::string& text, SpecFormat format);

// Picks yaml for .yaml/.yml paths, json otherwise.
SpecFormat format_for_path(const std::string& path);

// Base tool name before collision handling: service-prefixed snake-cased
// operationId when present, otherwise {service}_{method}_{path segments}.
// Always truncated to the name length limit.
std::string derive_tool_name(const ApiOperation& op, const std::string& service);

struct FlattenedArgs {
    json schema;  // {type: object, properties: {...}, required: [...]}
    std::vector<BoundParam> params;
};

// Lifts path/query/header parameters and top-level JSON body properties
// into one flat argument schema, recording each argument's upstream slot.
FlattenedArgs flatten_parameters(const ApiOperation& op);

// summary + blank line + description, trimmed; placeholder when empty.
std::string extract_description(const ApiOperation& op);

// Emits one ToolSpec per operation, sorted by (path, method), with unique
// names and http_endpoint bindings against `base_url`.
std::vector<ToolSpec> compile(const ApiDocument& doc, const std::string& service,
                              const std::string& base_url);

// YAML -> JSON bridge used by parse_document; exposed for reuse in tests.
json yaml_to_json(const std::string& text);

}  // namespace toolgate
