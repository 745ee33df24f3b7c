// Python bindings for the toolgate core: spec compilation, registry and
// index persistence, retrieval, scoring, and transcript rewriting. JSON
// values cross the boundary as serialized strings to keep the surface
// dependency-free.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "toolgate/embedder.hpp"
#include "toolgate/errors.hpp"
#include "toolgate/gateway.hpp"
#include "toolgate/harness.hpp"
#include "toolgate/index.hpp"
#include "toolgate/openapi.hpp"
#include "toolgate/registry.hpp"
#include "toolgate/schema.hpp"

namespace py = pybind11;
using namespace toolgate;

namespace {

json parse_json_arg(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw py::value_error(std::string(what) + " is not valid JSON: " + e.what());
    }
}

EmbedderConfig embedder_config_from(const std::string& config_json) {
    return EmbedderConfig::from_json(parse_json_arg(config_json, "embedder config"));
}

}  // namespace

PYBIND11_MODULE(_toolgate, m) {
    m.doc() = "Tool catalog compiler, retrieval index, and gateway core";

    py::register_exception<Error>(m, "ToolgateError");

    m.def(
        "compile_spec",
        [](const std::string& text, const std::string& format, const std::string& service,
           const std::string& base_url) {
            const SpecFormat fmt = format == "yaml" ? SpecFormat::yaml : SpecFormat::json;
            const ApiDocument doc = parse_document(text, fmt);
            const auto specs = compile(doc, service, base_url);
            json out = json::array();
            for (const auto& spec : specs) out.push_back(spec.to_json());
            return out.dump();
        },
        py::arg("text"), py::arg("format"), py::arg("service"), py::arg("base_url") = "",
        "Compile an OpenAPI document; returns the tool specs as a JSON array string.");

    m.def(
        "canonical_tool_text",
        [](const std::string& spec_json) {
            return canonical_tool_text(ToolSpec::from_json(parse_json_arg(spec_json, "spec")));
        },
        py::arg("spec_json"));

    m.def(
        "cosine_similarity",
        [](const std::vector<float>& a, const std::vector<float>& b) {
            return cosine_similarity(EmbeddingVector::of(a), EmbeddingVector::of(b));
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "validate_arguments",
        [](const std::string& value_json, const std::string& schema_json) {
            const auto errors =
                validate_against_schema(parse_json_arg(value_json, "value"),
                                        parse_json_arg(schema_json, "schema"));
            std::vector<std::pair<std::string, std::string>> out;
            for (const auto& err : errors) out.emplace_back(err.path, err.message);
            return out;
        },
        py::arg("value_json"), py::arg("schema_json"),
        "Returns a list of (path, message) validation errors; empty means accepted.");

    py::class_<ToolRegistry>(m, "ToolRegistry")
        .def(py::init([](std::int64_t created_at) { return ToolRegistry(created_at); }),
             py::arg("created_at") = 0)
        .def_static("load", [](const std::string& path) { return ToolRegistry::load(path); })
        .def("save", [](const ToolRegistry& reg, const std::string& path) { reg.save(path); })
        .def("add_tools",
             [](ToolRegistry& reg, const std::string& specs_json) {
                 std::vector<ToolSpec> specs;
                 for (const auto& item : parse_json_arg(specs_json, "specs"))
                     specs.push_back(ToolSpec::from_json(item));
                 reg.add_tools(specs);
             })
        .def("__len__", &ToolRegistry::size)
        .def("__contains__",
             [](const ToolRegistry& reg, const std::string& name) {
                 return reg.find(name) != nullptr;
             })
        .def("tool",
             [](const ToolRegistry& reg, const std::string& name) -> py::object {
                 const ToolSpec* spec = reg.find(name);
                 if (!spec) return py::none();
                 return py::str(spec->to_json().dump());
             })
        .def("names",
             [](const ToolRegistry& reg) {
                 std::vector<std::string> out;
                 for (const auto& [name, spec] : reg) out.push_back(name);
                 return out;
             })
        .def("stats", [](const ToolRegistry& reg) { return reg.stats().to_json().dump(); });

    py::class_<ToolIndex>(m, "ToolIndex")
        .def_static(
            "build",
            [](const ToolRegistry& registry, const std::string& embedder_config) {
                return ToolIndex::build(registry, embedder_config_from(embedder_config));
            },
            py::arg("registry"), py::arg("embedder_config") = "{}")
        .def_static("load", [](const std::string& path) { return ToolIndex::load(path); })
        .def("save", [](const ToolIndex& index, const std::string& path) { index.save(path); })
        .def("__len__", &ToolIndex::size)
        .def_property_readonly("dimension", &ToolIndex::dimension)
        .def(
            "search",
            [](const ToolIndex& index, const std::string& query, int k) {
                const RetrievalResult result = index.search({query, k});
                std::vector<std::pair<std::string, double>> out;
                for (const auto& hit : result.hits) out.emplace_back(hit.name, hit.score);
                return out;
            },
            py::arg("query"), py::arg("k") = 10);

    m.def(
        "score_task",
        [](const std::string& task_json, const std::string& trace_ndjson) {
            const TaskRecord task = TaskRecord::from_json(parse_json_arg(task_json, "task"));
            const RunTrace trace = RunTrace::parse(trace_ndjson, "<python>");
            return score_task(task, trace);
        },
        py::arg("task_json"), py::arg("trace_ndjson"));

    m.def(
        "retrieval_recall",
        [](const std::string& task_json, const std::string& trace_ndjson) {
            const TaskRecord task = TaskRecord::from_json(parse_json_arg(task_json, "task"));
            const RunTrace trace = RunTrace::parse(trace_ndjson, "<python>");
            return retrieval_recall(task, trace);
        },
        py::arg("task_json"), py::arg("trace_ndjson"));

    m.def(
        "run_stats",
        [](const std::string& trace_ndjson) {
            return compute_run_stats(RunTrace::parse(trace_ndjson, "<python>"))
                .to_json()
                .dump();
        },
        py::arg("trace_ndjson"));

    m.def(
        "postprocess_transcript",
        [](const std::string& ndjson, const ToolRegistry& registry,
           const std::vector<std::string>& allowlist) {
            const std::set<std::string> allow(allowlist.begin(), allowlist.end());
            const RewriteResult result = postprocess_transcript(ndjson, registry, allow);
            return py::make_tuple(result.transcript, result.rewrites);
        },
        py::arg("ndjson"), py::arg("registry"),
        py::arg("allowlist") = std::vector<std::string>{});

    m.attr("__version__") = "0.1.0";
}
