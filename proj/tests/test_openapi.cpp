#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "support/test_support.hpp"
#include "toolgate/errors.hpp"
#include "toolgate/openapi.hpp"
#include "toolgate/registry.hpp"

using namespace toolgate;
using toolgate::testing::fixtures_dir;
using toolgate::testing::read_fixture;
using toolgate::testing::temp_path;

namespace {

ApiDocument parse_fixture() {
    return parse_document(read_fixture("tasktrack.yaml"), SpecFormat::yaml);
}

const ApiOperation& find_op(const ApiDocument& doc, const std::string& method,
                            const std::string& path) {
    for (const auto& op : doc.operations)
        if (op.method == method && op.path == path) return op;
    throw std::runtime_error("operation not found: " + method + " " + path);
}

std::string file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

}  // namespace

TEST_CASE("parse_document counts one operation per (path, method)") {
    const ApiDocument doc = parse_fixture();
    CHECK(doc.operations.size() == 12);  // hand-counted in the fixture header
    CHECK(doc.title == "TaskTrack");
    CHECK(doc.version == "1.4.0");
    REQUIRE(doc.servers.size() == 1);
    CHECK(doc.servers[0] == "https://tasktrack.example.com/api/v4");
}

TEST_CASE("parse_document handles the empty paths case") {
    const ApiDocument doc =
        parse_document(R"({"openapi":"3.0.0","info":{"title":"t","version":"1"},"paths":{}})",
                       SpecFormat::json);
    CHECK(doc.operations.empty());
}

TEST_CASE("a path with GET and DELETE yields two operations") {
    const ApiDocument doc = parse_fixture();
    int count = 0;
    for (const auto& op : doc.operations)
        if (op.path == "/projects/{id}") ++count;
    CHECK(count == 2);
}

TEST_CASE("operations come out sorted by path then method") {
    const ApiDocument doc = parse_fixture();
    auto sorted = doc.operations;
    std::sort(sorted.begin(), sorted.end(), [](const ApiOperation& a, const ApiOperation& b) {
        return a.path != b.path ? a.path < b.path : a.method < b.method;
    });
    for (std::size_t i = 0; i < doc.operations.size(); ++i) {
        CHECK(doc.operations[i].path == sorted[i].path);
        CHECK(doc.operations[i].method == sorted[i].method);
    }
}

TEST_CASE("malformed JSON reports a parse error with position") {
    try {
        parse_document("{\"openapi\": \"3.0.0\",", SpecFormat::json);
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(e.kind() == Error::Kind::parse);
        CHECK(std::string(e.what()).find("parse error") != std::string::npos);
    }
}

TEST_CASE("malformed YAML reports line and column") {
    try {
        parse_document("paths:\n  /a: [unclosed", SpecFormat::yaml);
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(e.kind() == Error::Kind::parse);
        CHECK(std::string(e.what()).find("line") != std::string::npos);
    }
}

TEST_CASE("missing paths section is a structural error") {
    CHECK_THROWS_AS(parse_document(R"({"openapi":"3.0.0"})", SpecFormat::json), Error);
    try {
        parse_document(R"({"openapi":"3.0.0"})", SpecFormat::json);
    } catch (const Error& e) {
        CHECK(e.kind() == Error::Kind::structural);
    }
}

TEST_CASE("swagger 2.0 documents are rejected") {
    CHECK_THROWS_AS(parse_document(R"({"swagger":"2.0","paths":{}})", SpecFormat::json), Error);
}

TEST_CASE("external $refs are rejected, internal ones resolve") {
    const std::string external = R"({
        "openapi": "3.0.0",
        "paths": {"/a": {"get": {"requestBody": {"content": {"application/json":
            {"schema": {"$ref": "other.json#/Thing"}}}}, "responses": {}}}}
    })";
    CHECK_THROWS_AS(parse_document(external, SpecFormat::json), Error);

    const ApiDocument doc = parse_fixture();
    const auto& create_project = find_op(doc, "POST", "/projects");
    // The $ref to NewProject must be fully resolved by parse time.
    CHECK(create_project.op["requestBody"]["content"]["application/json"]["schema"]
              .contains("properties"));
}

TEST_CASE("undeclared path template parameter is a structural error") {
    const std::string doc = R"({
        "openapi": "3.0.0",
        "paths": {"/things/{id}": {"get": {"responses": {}}}}
    })";
    try {
        parse_document(doc, SpecFormat::json);
        FAIL("expected a structural error");
    } catch (const Error& e) {
        CHECK(e.kind() == Error::Kind::structural);
        CHECK(std::string(e.what()).find("id") != std::string::npos);
    }
}

TEST_CASE("derive_tool_name snake-cases operationId with service prefix") {
    const ApiDocument doc = parse_fixture();
    CHECK(derive_tool_name(find_op(doc, "PUT", "/projects/{id}/merge_requests/{mr_id}/merge"),
                           "gitlab") == "gitlab_merge_pr");
    CHECK(derive_tool_name(find_op(doc, "GET", "/search/issues"), "gitlab") ==
          "gitlab_search_issues");
}

TEST_CASE("derive_tool_name falls back to method plus path") {
    const ApiDocument doc = parse_fixture();
    CHECK(derive_tool_name(find_op(doc, "GET", "/projects/{id}/issues"), "gitlab") ==
          "gitlab_get_projects_id_issues");
}

TEST_CASE("derive_tool_name stays within the name limit") {
    ApiOperation op;
    op.path = "/extremely/long/path/segment/that/keeps/going/and/going/beyond/any/reason";
    op.method = "GET";
    op.op = json::object();
    const std::string name = derive_tool_name(op, "service");
    CHECK(name.size() <= kMaxToolNameLength);
    CHECK(is_valid_tool_name(name));
}

TEST_CASE("colliding sanitized names get a stable hash suffix") {
    const std::string doc_text = R"({
        "openapi": "3.0.0",
        "paths": {
            "/a-b": {"get": {"responses": {}}},
            "/a_b": {"get": {"responses": {}}}
        }
    })";
    const ApiDocument doc = parse_document(doc_text, SpecFormat::json);
    const auto specs = compile(doc, "svc", "http://x");
    REQUIRE(specs.size() == 2);
    CHECK(specs[0].name != specs[1].name);
    CHECK(specs[0].name == "svc_get_a_b");
    CHECK(specs[1].name.rfind("svc_get_a_b_", 0) == 0);
    CHECK(specs[1].name.size() == std::string("svc_get_a_b_").size() + 4);
    // Deterministic across recompilation.
    const auto again = compile(doc, "svc", "http://x");
    CHECK(again[1].name == specs[1].name);
}

TEST_CASE("flatten_parameters merges path, query, and body properties") {
    const ApiDocument doc = parse_fixture();
    const auto flat =
        flatten_parameters(find_op(doc, "PUT", "/projects/{id}/merge_requests/{mr_id}/merge"));
    // 2 path + 3 query + 2 body
    CHECK(flat.schema["properties"].size() == 7);
    const auto& required = flat.schema["required"];
    CHECK(std::find(required.begin(), required.end(), "id") != required.end());
    CHECK(std::find(required.begin(), required.end(), "mr_id") != required.end());
    // body is not required, so its properties are optional
    CHECK(std::find(required.begin(), required.end(), "message") == required.end());
}

TEST_CASE("body property colliding with a path parameter is prefixed") {
    const ApiDocument doc = parse_fixture();
    const auto flat = flatten_parameters(find_op(doc, "PATCH", "/users/{id}"));
    CHECK(flat.schema["properties"].contains("id"));
    CHECK(flat.schema["properties"].contains("body_id"));
    CHECK(flat.schema["properties"].contains("name"));
    // The binding remembers the original body key.
    bool found = false;
    for (const auto& p : flat.params)
        if (p.arg == "body_id") {
            CHECK(p.location == ParamLocation::body);
            CHECK(p.source == "id");
            found = true;
        }
    CHECK(found);
}

TEST_CASE("nested body schemas are preserved verbatim") {
    const ApiDocument doc = parse_fixture();
    const auto& create_issue = find_op(doc, "POST", "/projects/{id}/issues");
    const auto flat = flatten_parameters(create_issue);
    const json& board = flat.schema["properties"]["board"];
    const json& source =
        create_issue.op["requestBody"]["content"]["application/json"]["schema"]["properties"]
                     ["board"];
    CHECK(board == source);
    CHECK(board["properties"]["columns"]["items"]["properties"].contains("limit"));
}

TEST_CASE("non-object bodies become a single body argument") {
    const std::string doc_text = R"({
        "openapi": "3.0.0",
        "paths": {"/upload": {"post": {
            "requestBody": {"required": true, "content": {"application/json":
                {"schema": {"type": "array", "items": {"type": "string"}}}}},
            "responses": {}}}}
    })";
    const ApiDocument doc = parse_document(doc_text, SpecFormat::json);
    const auto flat = flatten_parameters(doc.operations.front());
    REQUIRE(flat.schema["properties"].contains("body"));
    CHECK(flat.schema["properties"]["body"]["type"] == "array");
    REQUIRE(flat.params.size() == 1);
    CHECK(flat.params[0].source.empty());  // whole-body marker
}

TEST_CASE("auth headers are excluded from arguments, other headers kept") {
    const ApiDocument doc = parse_fixture();
    const auto flat = flatten_parameters(find_op(doc, "GET", "/search"));
    CHECK(!flat.schema["properties"].contains("Authorization"));
    CHECK(flat.schema["properties"].contains("X-Request-Id"));
    for (const auto& p : flat.params)
        if (p.arg == "X-Request-Id") CHECK(p.location == ParamLocation::header);
}

TEST_CASE("extract_description joins summary and description") {
    const ApiDocument doc = parse_fixture();
    CHECK(extract_description(find_op(doc, "GET", "/users")) ==
          "List users\n\nReturns all users.");
    // Trailing newlines are trimmed.
    CHECK(extract_description(find_op(doc, "DELETE", "/runners/{id}")) ==
          "Unregister a runner.");
}

TEST_CASE("missing summary and description yield the placeholder") {
    ApiOperation op;
    op.path = "/x";
    op.method = "GET";
    op.op = json::object();
    CHECK(extract_description(op) == kNoDescriptionPlaceholder);
}

TEST_CASE("compile emits one spec per operation with valid unique names") {
    const ApiDocument doc = parse_fixture();
    const auto specs = compile(doc, "tasktrack", "https://tasktrack.example.com/api/v4");
    CHECK(specs.size() == doc.operations.size());

    std::set<std::string> names;
    for (const auto& spec : specs) {
        CHECK(is_valid_tool_name(spec.name));
        CHECK(names.insert(spec.name).second);
        CHECK(!spec.description.empty());
        CHECK(spec.arguments["type"] == "object");
        const auto& binding = std::get<HttpBinding>(spec.binding);
        CHECK(!binding.method.empty());
        CHECK(binding.base_url == "https://tasktrack.example.com/api/v4");
    }
}

TEST_CASE("tool-per-endpoint bijection holds") {
    const ApiDocument doc = parse_fixture();
    const auto specs = compile(doc, "tasktrack", "http://x");
    std::multiset<std::pair<std::string, std::string>> endpoints;
    for (const auto& op : doc.operations) endpoints.insert({op.path, op.method});
    std::multiset<std::pair<std::string, std::string>> bound;
    for (const auto& spec : specs) {
        const auto& binding = std::get<HttpBinding>(spec.binding);
        bound.insert({binding.path_template, binding.method});
    }
    CHECK(endpoints == bound);
}

TEST_CASE("compiling the same document twice is byte-identical") {
    const std::string text = read_fixture("tasktrack.yaml");
    const auto path_a = temp_path("registry-a");
    const auto path_b = temp_path("registry-b");

    for (const auto& path : {path_a, path_b}) {
        const ApiDocument doc = parse_document(text, SpecFormat::yaml);
        ToolRegistry registry(1700000000);
        registry.add_tools(compile(doc, "tasktrack", "http://x"));
        registry.save(path);
    }
    CHECK(file_bytes(path_a) == file_bytes(path_b));
    std::filesystem::remove(path_a);
    std::filesystem::remove(path_b);
}

TEST_CASE("path parameters declared only at path level are merged in") {
    const ApiDocument doc = parse_fixture();
    const auto flat = flatten_parameters(find_op(doc, "GET", "/projects/{id}"));
    REQUIRE(flat.schema["properties"].contains("id"));
    CHECK(flat.schema["properties"]["id"]["description"] == "Project identifier.");
}

TEST_CASE("array-typed query parameters keep their schema") {
    const ApiDocument doc = parse_fixture();
    const auto flat = flatten_parameters(find_op(doc, "GET", "/projects/{id}/issues"));
    CHECK(flat.schema["properties"]["labels"]["type"] == "array");
    CHECK(flat.schema["properties"]["labels"]["items"]["type"] == "string");
}
