// toolgate CLI: compile OpenAPI specs into a tool registry, build the
// retrieval index, serve the gateway, and run the evaluation utilities.

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "toolgate/config.hpp"
#include "toolgate/errors.hpp"
#include "toolgate/gateway.hpp"
#include "toolgate/harness.hpp"
#include "toolgate/index.hpp"
#include "toolgate/openapi.hpp"
#include "toolgate/registry.hpp"
#include "toolgate/schema.hpp"

namespace {

using namespace toolgate;

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Error::Kind::io, "cannot read file: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::string format_double(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", value);
    return buf;
}

struct CompileArgs {
    std::vector<std::string> specs;
    std::vector<std::string> services;
    std::vector<std::string> base_urls;
    std::string out;
};

int run_compile(const CompileArgs& args) {
    if (args.services.size() != args.specs.size() && args.services.size() != 1)
        throw Error(Error::Kind::config,
                    "--service must be given once or once per --spec");
    if (!args.base_urls.empty() && args.base_urls.size() != args.specs.size() &&
        args.base_urls.size() != 1)
        throw Error(Error::Kind::config,
                    "--base-url must be given once or once per --spec");

    ToolRegistry registry(registry_timestamp());
    std::vector<std::string> errors;
    std::map<std::string, std::size_t> per_service;

    for (std::size_t i = 0; i < args.specs.size(); ++i) {
        const std::string& spec_path = args.specs[i];
        const std::string service =
            args.services.size() == 1 ? args.services[0] : args.services[i];
        std::string base_url;
        if (!args.base_urls.empty())
            base_url = args.base_urls.size() == 1 ? args.base_urls[0] : args.base_urls[i];
        try {
            const ApiDocument doc =
                parse_document(read_file(spec_path), format_for_path(spec_path));
            for (const auto& warning : doc.warnings)
                std::cerr << spec_path << ": warning: " << warning << "\n";
            std::string url = base_url;
            if (url.empty() && !doc.servers.empty()) url = doc.servers.front();
            const auto specs = compile(doc, service, url);
            registry.add_tools(specs);
            per_service[service] += specs.size();
        } catch (const Error& e) {
            errors.push_back(spec_path + ": " + e.kind_name() + " error: " + e.what());
        }
    }

    // Report every failure, not just the first.
    for (const auto& message : errors) std::cerr << "error: " << message << "\n";
    if (!errors.empty()) return 1;

    registry.save(args.out);
    for (const auto& [service, count] : per_service)
        std::cout << service << ": " << count << " tools\n";
    return 0;
}

EmbedderConfig embedder_from_flags(const std::string& provider, int dim, std::uint64_t seed,
                                   const std::string& endpoint, const std::string& model,
                                   const std::string& auth_env, int batch_size) {
    json j = {{"provider", provider}};
    if (provider == "local_fallback") {
        j["dimension"] = dim;
        j["seed"] = seed;
    } else {
        j["endpoint"] = endpoint;
        j["model"] = model;
        if (!auth_env.empty()) j["auth_env"] = auth_env;
        j["batch_size"] = batch_size;
    }
    return EmbedderConfig::from_json(j);
}

int run_serve(const std::string& config_path, const std::string& transport,
              const std::string& host, int port) {
    const GatewayConfig config = GatewayConfig::load(config_path);

    ToolRegistry registry = ToolRegistry::load(config.registry_path);
    ToolIndex index = ToolIndex::load(config.index_path);
    index.ensure_compatible(config.embedder);

    Executor executor;
    for (const auto& [name, svc] : config.services) executor.set_service_config(name, svc);

    // Downstream MCP servers join the catalog at startup.
    bool downstream_tools_added = false;
    for (const auto& desc : config.downstreams) {
        DownstreamServer server = register_downstream(desc);
        const auto specs = compile_downstream_tools(server, registry);
        if (!specs.empty()) {
            registry.add_tools(specs);
            downstream_tools_added = true;
        }
        executor.add_downstream(std::move(server));
        std::cerr << "registered downstream '" << desc.id << "' with " << specs.size()
                  << " tools\n";
    }
    if (downstream_tools_added) {
        std::cerr << "re-indexing " << registry.size() << " tools after downstream merge\n";
        index = ToolIndex::build(registry, config.embedder);
    }

    std::unique_ptr<TraceLog> trace;
    if (!config.trace_path.empty()) trace = std::make_unique<TraceLog>(config.trace_path);

    Gateway gateway(registry, index, executor, config.options, trace.get());
    if (transport == "stdio") {
        serve_stdio(gateway, std::cin, std::cout);
        return 0;
    }
    HttpGatewayServer server(gateway);
    const int bound = server.start(host, port);
    std::cerr << "toolgate gateway listening on http://" << host << ":" << bound << "/mcp\n";
    // Serve until killed.
    for (;;) std::this_thread::sleep_for(std::chrono::seconds(60));
}

std::vector<std::filesystem::path> expand_paths(const std::vector<std::string>& inputs) {
    std::vector<std::filesystem::path> out;
    for (const auto& input : inputs) {
        std::filesystem::path p(input);
        if (std::filesystem::is_directory(p)) {
            for (const auto& entry : std::filesystem::directory_iterator(p))
                if (entry.is_regular_file()) out.push_back(entry.path());
            std::sort(out.begin(), out.end());
        } else {
            out.push_back(p);
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"toolgate: compile REST APIs into a searchable tool catalog and serve it "
                 "over MCP"};
    app.require_subcommand(1);

    // compile
    CompileArgs compile_args;
    auto* cmd_compile = app.add_subcommand("compile", "Compile OpenAPI specs into a registry");
    cmd_compile->add_option("--spec", compile_args.specs, "OpenAPI document (JSON or YAML)")
        ->required()
        ->expected(-1);
    cmd_compile->add_option("--service", compile_args.services, "Service label per spec")
        ->required();
    cmd_compile->add_option("--base-url", compile_args.base_urls, "Upstream base URL per spec");
    cmd_compile->add_option("--out", compile_args.out, "Registry output path")->required();

    // index
    std::string index_registry, index_out, index_provider = "local_fallback";
    std::string index_endpoint, index_model, index_auth_env;
    int index_dim = 256, index_batch = 64;
    std::uint64_t index_seed = 0x746f6f6c;
    auto* cmd_index = app.add_subcommand("index", "Build the retrieval index for a registry");
    cmd_index->add_option("--registry", index_registry, "Registry path")->required();
    cmd_index->add_option("--out", index_out, "Index output path")->required();
    cmd_index->add_option("--provider", index_provider, "local_fallback or remote")
        ->check(CLI::IsMember({"local_fallback", "remote"}));
    cmd_index->add_option("--dim", index_dim, "Fallback embedder dimension (>= 64)");
    cmd_index->add_option("--seed", index_seed, "Fallback embedder token-hash seed");
    cmd_index->add_option("--endpoint", index_endpoint, "Remote embedder endpoint URL");
    cmd_index->add_option("--model", index_model, "Remote embedder model identifier");
    cmd_index->add_option("--auth-env", index_auth_env,
                          "Environment variable holding the remote API key");
    cmd_index->add_option("--batch-size", index_batch, "Remote embedding batch size");

    // serve
    std::string serve_config, serve_transport = "stdio", serve_host = "127.0.0.1";
    int serve_port = 8848;
    auto* cmd_serve = app.add_subcommand("serve", "Serve the gateway MCP server");
    cmd_serve->add_option("--config", serve_config, "Gateway config JSON")->required();
    cmd_serve->add_option("--transport", serve_transport, "stdio or http")
        ->check(CLI::IsMember({"stdio", "http"}));
    cmd_serve->add_option("--host", serve_host, "HTTP bind host");
    cmd_serve->add_option("--port", serve_port, "HTTP bind port");

    // search
    std::string search_index, search_query, search_registry;
    int search_k = 10;
    bool search_json = false;
    auto* cmd_search = app.add_subcommand("search", "Query the index directly");
    cmd_search->add_option("--index", search_index, "Index path")->required();
    cmd_search->add_option("--query", search_query, "Free-text query")->required();
    cmd_search->add_option("-k,--top-k", search_k, "Number of hits");
    cmd_search->add_option("--registry", search_registry, "Registry path (adds descriptions)");
    cmd_search->add_flag("--json", search_json, "Machine-readable output");

    // call
    std::string call_config, call_tool_name, call_args_text = "{}";
    auto* cmd_call = app.add_subcommand("call", "Invoke one tool through the executor");
    cmd_call->add_option("--config", call_config, "Gateway config JSON")->required();
    cmd_call->add_option("--tool", call_tool_name, "Registered tool name")->required();
    cmd_call->add_option("--args", call_args_text, "Arguments as a JSON object");

    // stats
    std::string stats_registry;
    bool stats_json = false;
    auto* cmd_stats = app.add_subcommand("stats", "Print registry statistics");
    cmd_stats->add_option("--registry", stats_registry, "Registry path")->required();
    cmd_stats->add_flag("--json", stats_json, "Machine-readable output");

    // replay
    std::string replay_in, replay_out, replay_registry;
    std::vector<std::string> replay_allow;
    bool replay_json = false;
    auto* cmd_replay =
        app.add_subcommand("replay", "Rewrite direct tool calls in a transcript to call_tool");
    cmd_replay->add_option("--in", replay_in, "Input transcript (NDJSON)")->required();
    cmd_replay->add_option("--out", replay_out, "Output path (defaults to stdout)");
    cmd_replay->add_option("--registry", replay_registry, "Registry path")->required();
    cmd_replay->add_option("--allow", replay_allow, "Local tool names to leave untouched");
    cmd_replay->add_flag("--json", replay_json, "Machine-readable output");

    // score
    std::vector<std::string> score_tasks, score_traces;
    bool score_json = false;
    auto* cmd_score = app.add_subcommand("score", "Score run traces against task records");
    cmd_score->add_option("--tasks", score_tasks, "Task JSON files or directories")
        ->required();
    cmd_score->add_option("--traces", score_traces, "Trace files or directories")->required();
    cmd_score->add_flag("--json", score_json, "Machine-readable output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cmd_compile->parsed()) return run_compile(compile_args);

        if (cmd_index->parsed()) {
            const EmbedderConfig cfg =
                embedder_from_flags(index_provider, index_dim, index_seed, index_endpoint,
                                    index_model, index_auth_env, index_batch);
            const ToolRegistry registry = ToolRegistry::load(index_registry);
            const ToolIndex index = ToolIndex::build(registry, cfg);
            index.save(index_out);
            std::cout << "indexed " << index.size() << " tools (dimension "
                      << index.dimension() << ")\n";
            return 0;
        }

        if (cmd_serve->parsed())
            return run_serve(serve_config, serve_transport, serve_host, serve_port);

        if (cmd_search->parsed()) {
            const ToolIndex index = ToolIndex::load(search_index);
            const RetrievalResult result = index.search({search_query, search_k});
            ToolRegistry registry;
            if (!search_registry.empty()) registry = ToolRegistry::load(search_registry);
            if (search_json) {
                json hits = json::array();
                for (const auto& hit : result.hits)
                    hits.push_back({{"name", hit.name}, {"score", hit.score}});
                std::cout << json{{"query", result.query_echo}, {"hits", hits}}.dump()
                          << "\n";
            } else {
                for (std::size_t i = 0; i < result.hits.size(); ++i) {
                    const auto& hit = result.hits[i];
                    std::cout << (i + 1) << ". " << hit.name << "  "
                              << format_double(hit.score);
                    if (const ToolSpec* spec = registry.find(hit.name)) {
                        std::string first_line = spec->description;
                        const auto nl = first_line.find('\n');
                        if (nl != std::string::npos) first_line.resize(nl);
                        std::cout << "  " << first_line;
                    }
                    std::cout << "\n";
                }
            }
            return 0;
        }

        if (cmd_call->parsed()) {
            const GatewayConfig config = GatewayConfig::load(call_config);
            const ToolRegistry registry = ToolRegistry::load(config.registry_path);
            const ToolSpec* spec = registry.find(call_tool_name);
            if (!spec)
                throw Error(Error::Kind::validation, "unknown tool: " + call_tool_name);
            json arguments;
            try {
                arguments = json::parse(call_args_text);
            } catch (const json::parse_error& e) {
                throw Error(Error::Kind::validation,
                            std::string("--args is not valid JSON: ") + e.what());
            }
            const auto errors = validate_against_schema(arguments, spec->arguments);
            if (!errors.empty())
                throw Error(Error::Kind::validation,
                            "argument validation failed: " + format_field_errors(errors));
            Executor executor;
            for (const auto& [name, svc] : config.services)
                executor.set_service_config(name, svc);
            for (const auto& desc : config.downstreams)
                executor.add_downstream(register_downstream(desc));
            const CallOutcome outcome = executor.dispatch(*spec, arguments);
            if (outcome.ok()) {
                std::cout << outcome.payload << "\n";
                return 0;
            }
            std::cerr << "error: " << CallOutcome::status_name(outcome.status);
            if (outcome.upstream_code) std::cerr << " (status " << *outcome.upstream_code << ")";
            std::cerr << ": " << outcome.payload << "\n";
            return 1;
        }

        if (cmd_stats->parsed()) {
            const ToolRegistry registry = ToolRegistry::load(stats_registry);
            const RegistryStats stats = registry.stats();
            if (stats_json) {
                std::cout << stats.to_json().dump() << "\n";
            } else {
                std::cout << "tools: " << stats.tool_count << "\n"
                          << "mean args: " << format_double(stats.mean_args) << "\n"
                          << "max args: " << stats.max_args << "\n"
                          << "complex fraction: " << format_double(stats.complex_fraction)
                          << "\n";
                for (const auto& [service, svc] : stats.per_service)
                    std::cout << service << ": " << svc.tool_count << " tools, mean args "
                              << format_double(svc.mean_args) << ", max args " << svc.max_args
                              << ", complex fraction " << format_double(svc.complex_fraction)
                              << "\n";
            }
            return 0;
        }

        if (cmd_replay->parsed()) {
            const ToolRegistry registry = ToolRegistry::load(replay_registry);
            const std::set<std::string> allow(replay_allow.begin(), replay_allow.end());
            const RewriteResult result =
                postprocess_transcript(read_file(replay_in), registry, allow);
            if (replay_out.empty()) {
                std::cout << result.transcript;
            } else {
                std::ofstream out(replay_out, std::ios::binary | std::ios::trunc);
                if (!out)
                    throw Error(Error::Kind::io, "cannot write transcript: " + replay_out);
                out << result.transcript;
            }
            if (replay_json)
                std::cout << json{{"rewrites", result.rewrites}}.dump() << "\n";
            else
                std::cerr << "rewrote " << result.rewrites << " tool calls\n";
            return 0;
        }

        if (cmd_score->parsed()) {
            std::vector<TaskRecord> tasks;
            for (const auto& path : expand_paths(score_tasks))
                tasks.push_back(TaskRecord::load(path));
            std::vector<RunTrace> traces;
            for (const auto& path : expand_paths(score_traces))
                traces.push_back(RunTrace::load(path));

            std::map<std::string, const TaskRecord*> by_id;
            for (const auto& task : tasks) by_id[task.task_id] = &task;

            json task_rows = json::array();
            for (const auto& trace : traces) {
                const auto it = by_id.find(trace.task_id);
                if (it == by_id.end())
                    throw Error(Error::Kind::data,
                                "trace for unknown task '" + trace.task_id + "'");
                const double score = score_task(*it->second, trace);
                const RunStats stats = compute_run_stats(*it->second, trace);
                if (score_json) {
                    json row = stats.to_json();
                    row["task_id"] = trace.task_id;
                    row["score"] = score;
                    row["completed"] = trace.completed;
                    task_rows.push_back(std::move(row));
                } else {
                    std::cout << trace.task_id << ": score " << format_double(score)
                              << ", recall " << format_double(stats.retrieval_recall)
                              << ", calls " << stats.call_attempts << " (failed "
                              << stats.failed_calls << ")\n";
                }
            }
            const AggregateReport report = aggregate_report(tasks, traces);
            if (score_json)
                std::cout << json{{"tasks", task_rows}, {"report", report.to_json()}}.dump()
                          << "\n";
            else
                std::cout << "\n" << report.to_table();
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error (" << e.kind_name() << "): " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
