#include "toolgate/gateway.hpp"

#include <algorithm>
#include <atomic>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "toolgate/errors.hpp"
#include "toolgate/schema.hpp"

namespace toolgate {

namespace {

constexpr int kParseError = -32700;
constexpr int kInvalidRequest = -32600;
constexpr int kMethodNotFound = -32601;
constexpr int kInvalidParams = -32602;

json error_response(const json& id, int code, const std::string& message,
                    const json& data = nullptr) {
    json error = {{"code", code}, {"message", message}};
    if (!data.is_null()) error["data"] = data;
    return {{"jsonrpc", "2.0"}, {"id", id}, {"error", std::move(error)}};
}

json result_response(const json& id, json result) {
    return {{"jsonrpc", "2.0"}, {"id", id}, {"result", std::move(result)}};
}

std::size_t levenshtein(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), curr(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        curr[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
            curr[j] = std::min({prev[j] + 1, curr[j - 1] + 1, prev[j - 1] + cost});
        }
        std::swap(prev, curr);
    }
    return prev[b.size()];
}

std::string format_score(double score) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", score);
    return buf;
}

}  // namespace

const std::vector<std::string>& Gateway::supported_protocol_versions() {
    static const std::vector<std::string> versions = {"2024-11-05", "2025-03-26", "2025-06-18"};
    return versions;
}

Gateway::Gateway(const ToolRegistry& registry, const ToolIndex& index, const Executor& executor,
                 GatewayOptions options, TraceLog* trace)
    : registry_(registry),
      index_(index),
      executor_(executor),
      options_(std::move(options)),
      trace_(trace) {}

json Gateway::tools_list() const {
    const json finder = {
        {"name", "tool_finder"},
        {"description",
         "Search the tool catalog with a free-text query. Returns the name, "
         "description, argument schema, and similarity score of the most relevant "
         "tools. Call this before call_tool to discover what is available."},
        {"inputSchema",
         {{"type", "object"},
          {"properties",
           {{"query",
             {{"type", "string"},
              {"description", "Natural-language description of the capability you need."}}},
            {"top_k",
             {{"type", "integer"},
              {"description", "How many tools to return (default " +
                                  std::to_string(options_.default_top_k) + ")."}}}}},
          {"required", json::array({"query"})}}}};
    const json caller = {
        {"name", "call_tool"},
        {"description",
         "Invoke a tool from the catalog by name with a JSON object of arguments. "
         "Use tool_finder first to obtain the tool's name and argument schema."},
        {"inputSchema",
         {{"type", "object"},
          {"properties",
           {{"tool_name",
             {{"type", "string"}, {"description", "Exact name of the tool to invoke."}}},
            {"arguments",
             {{"type", "object"},
              {"description", "Arguments matching the tool's schema."}}}}},
          {"required", json::array({"tool_name", "arguments"})}}}};
    return json::array({finder, caller});
}

json Gateway::tool_result_text(const std::string& text, bool is_error) const {
    return {{"content", json::array({{{"type", "text"}, {"text", text}}})},
            {"isError", is_error}};
}

json Gateway::tool_finder(GatewaySession& session, const std::string& query,
                          int top_k) const {
    ++session.tool_finder_calls;
    if (query.empty())
        return tool_result_text("tool_finder error: 'query' must be a non-empty string.", true);
    if (top_k < 1)
        return tool_result_text("tool_finder error: 'top_k' must be a positive integer.", true);

    RetrievalResult result;
    try {
        result = index_.search({query, top_k});
    } catch (const Error& e) {
        return tool_result_text(std::string("tool_finder error: ") + e.what(), true);
    }

    std::vector<std::string> hit_names;
    hit_names.reserve(result.hits.size());
    std::ostringstream out;
    out << "Found " << result.hits.size() << " tools for query: \"" << query << "\"\n";
    for (std::size_t i = 0; i < result.hits.size(); ++i) {
        const auto& hit = result.hits[i];
        hit_names.push_back(hit.name);
        session.retrieved_tools.insert(hit.name);
        const ToolSpec* spec = registry_.find(hit.name);
        out << "\n[" << (i + 1) << "] " << hit.name << " (score " << format_score(hit.score)
            << ")\n";
        if (spec) {
            out << spec->description << "\n";
            out << "Arguments schema: " << spec->arguments.dump() << "\n";
        }
    }
    if (trace_) trace_->finder_event(session.id, query, hit_names);
    return tool_result_text(out.str(), false);
}

json Gateway::call_tool(GatewaySession& session, const std::string& tool_name,
                        const json& arguments) const {
    ++session.call_tool_calls;
    auto fail = [&](const std::string& message) {
        ++session.failed_calls;
        if (trace_) trace_->call_event(session.id, tool_name, false);
        return tool_result_text(message, true);
    };

    const ToolSpec* spec = registry_.find(tool_name);
    if (!spec) {
        std::string suggestion;
        std::size_t best = std::string::npos;
        for (const auto& [name, candidate] : registry_) {
            const std::size_t d = levenshtein(tool_name, name);
            if (d < best) {
                best = d;
                suggestion = name;
            }
        }
        std::string message = "unknown tool '" + tool_name + "'";
        if (!suggestion.empty()) message += "; closest registered name is '" + suggestion + "'";
        message += ". Use tool_finder to discover tools.";
        return fail(message);
    }

    if (options_.strict && !session.retrieved_tools.count(tool_name))
        return fail("tool not yet retrieved: '" + tool_name +
                    "' was never returned by tool_finder in this session. Call tool_finder "
                    "with a relevant query first.");

    if (!arguments.is_object())
        return fail("invalid arguments: expected a JSON object");

    const auto errors = validate_against_schema(arguments, spec->arguments);
    if (!errors.empty())
        return fail("argument validation failed for '" + tool_name + "': " +
                    format_field_errors(errors));

    const CallOutcome outcome = executor_.dispatch(*spec, arguments);
    if (!outcome.ok()) {
        std::string message = CallOutcome::status_name(outcome.status);
        if (outcome.upstream_code) message += " (status " + std::to_string(*outcome.upstream_code) + ")";
        message += ": " + outcome.payload;
        return fail(message);
    }

    std::string payload = outcome.payload;
    if (payload.size() > options_.truncate_bytes) {
        const std::size_t removed = payload.size() - options_.truncate_bytes;
        payload.resize(options_.truncate_bytes);
        payload += "\n[truncated " + std::to_string(removed) + " bytes]";
    }
    if (trace_) trace_->call_event(session.id, tool_name, true);
    return tool_result_text(payload, false);
}

json Gateway::handle_initialize(GatewaySession& session, const json& params) const {
    if (session.initialized)
        throw Error(Error::Kind::protocol, "session is already initialized");

    const std::string requested = params.value("protocolVersion", "");
    const auto& supported = supported_protocol_versions();
    if (!requested.empty() &&
        std::find(supported.begin(), supported.end(), requested) == supported.end()) {
        std::string message = "unsupported protocol version '" + requested + "'; supported: ";
        for (std::size_t i = 0; i < supported.size(); ++i) {
            if (i) message += ", ";
            message += supported[i];
        }
        Error err(Error::Kind::validation, message);
        throw err;
    }

    session.initialized = true;
    return {{"protocolVersion", requested.empty() ? supported.back() : requested},
            {"capabilities", {{"tools", json::object()}}},
            {"serverInfo",
             {{"name", options_.server_name}, {"version", options_.server_version}}}};
}

json Gateway::dispatch(GatewaySession& session, const json& envelope) const {
    const json id = envelope.contains("id") ? envelope["id"] : json(nullptr);
    const bool is_notification = !envelope.contains("id");

    if (!envelope.is_object() || envelope.value("jsonrpc", "") != "2.0" ||
        !envelope.contains("method") || !envelope["method"].is_string()) {
        if (is_notification && envelope.is_object() && !envelope.contains("method"))
            return json(nullptr);
        return error_response(id, kInvalidRequest, "malformed JSON-RPC 2.0 envelope");
    }
    if (!id.is_null() && !id.is_string() && !id.is_number())
        return error_response(nullptr, kInvalidRequest, "invalid request id type");

    const std::string method = envelope["method"].get<std::string>();
    const json params = envelope.value("params", json::object());

    if (method == "notifications/initialized" || method.rfind("notifications/", 0) == 0)
        return json(nullptr);

    if (method == "initialize") {
        try {
            return result_response(id, handle_initialize(session, params));
        } catch (const Error& e) {
            if (e.kind() == Error::Kind::validation) {
                return error_response(id, kInvalidParams, e.what(),
                                      {{"supported", supported_protocol_versions()}});
            }
            return error_response(id, kInvalidRequest, e.what());
        }
    }

    if (!session.initialized)
        return error_response(id, kInvalidRequest,
                              "session is not initialized; send initialize first");

    if (method == "ping") return result_response(id, json::object());

    if (method == "tools/list")
        return result_response(id, {{"tools", tools_list()}});

    if (method == "tools/call") {
        if (!params.is_object() || !params.contains("name") || !params["name"].is_string())
            return error_response(id, kInvalidParams, "tools/call requires a 'name' string");
        const std::string name = params["name"].get<std::string>();
        const json arguments = params.value("arguments", json::object());

        if (name == "tool_finder") {
            const std::string query =
                arguments.contains("query") && arguments["query"].is_string()
                    ? arguments["query"].get<std::string>()
                    : "";
            int top_k = options_.default_top_k;
            if (arguments.contains("top_k")) {
                if (arguments["top_k"].is_number_integer())
                    top_k = arguments["top_k"].get<int>();
                else
                    return result_response(
                        id, tool_result_text("tool_finder error: 'top_k' must be an integer.",
                                             true));
            }
            return result_response(id, tool_finder(session, query, top_k));
        }
        if (name == "call_tool") {
            if (!arguments.contains("tool_name") || !arguments["tool_name"].is_string())
                return result_response(
                    id, tool_result_text(
                            "call_tool error: 'tool_name' must be a string.", true));
            if (!arguments.contains("arguments"))
                return result_response(
                    id, tool_result_text(
                            "call_tool error: 'arguments' object is required.", true));
            return result_response(id, call_tool(session,
                                                 arguments["tool_name"].get<std::string>(),
                                                 arguments["arguments"]));
        }
        return error_response(id, kInvalidParams,
                              "unknown tool '" + name +
                                  "'; this gateway exposes tool_finder and call_tool");
    }

    return error_response(id, kMethodNotFound, "method not found: " + method);
}

json Gateway::handle(GatewaySession& session, const json& envelope) const {
    const json response = dispatch(session, envelope);
    if (!envelope.contains("id")) return json(nullptr);  // notification: never respond
    return response;
}

std::string Gateway::handle_line(GatewaySession& session, const std::string& line) const {
    json envelope;
    try {
        envelope = json::parse(line);
    } catch (const json::parse_error& e) {
        return error_response(nullptr, kParseError, std::string("parse error: ") + e.what())
            .dump();
    }
    const json response = handle(session, envelope);
    return response.is_null() ? std::string() : response.dump();
}

void serve_stdio(const Gateway& gateway, std::istream& in, std::ostream& out) {
    GatewaySession session;
    session.id = "stdio";
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::string response = gateway.handle_line(session, line);
        if (!response.empty()) {
            out << response << "\n";
            out.flush();
        }
    }
}

// ---------------------------------------------------------------------------
// HTTP transport

struct HttpGatewayServer::Impl {
    explicit Impl(const Gateway& gateway) : gateway(gateway) {}

    struct Entry {
        GatewaySession session;
        std::mutex mutex;
    };

    Entry& session_entry(const std::string& id) {
        std::lock_guard<std::mutex> lock(map_mutex);
        auto it = sessions.find(id);
        if (it == sessions.end())
            it = sessions.emplace(id, std::make_unique<Entry>()).first;
        if (it->second->session.id.empty()) it->second->session.id = id;
        return *it->second;
    }

    bool session_exists(const std::string& id) {
        std::lock_guard<std::mutex> lock(map_mutex);
        return sessions.count(id) > 0;
    }

    std::string fresh_session_id() {
        static std::atomic<std::uint64_t> counter{1};
        std::random_device rd;
        std::ostringstream out;
        out << std::hex << rd() << counter.fetch_add(1);
        return out.str();
    }

    const Gateway& gateway;
    httplib::Server server;
    std::thread thread;
    std::map<std::string, std::unique_ptr<Entry>> sessions;
    std::mutex map_mutex;
};

HttpGatewayServer::HttpGatewayServer(const Gateway& gateway)
    : impl_(std::make_unique<Impl>(gateway)) {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
        res.set_header("Content-Type", "application/json");

        json envelope;
        try {
            envelope = json::parse(req.body);
        } catch (const json::parse_error& e) {
            res.body = error_response(nullptr, kParseError,
                                      std::string("parse error: ") + e.what())
                           .dump();
            return;
        }

        std::string session_id = req.get_header_value("Mcp-Session-Id");
        const bool is_initialize =
            envelope.is_object() && envelope.value("method", "") == "initialize";
        if (session_id.empty()) {
            if (!is_initialize) {
                res.body = error_response(envelope.value("id", json(nullptr)), kInvalidRequest,
                                          "missing Mcp-Session-Id header")
                               .dump();
                return;
            }
            session_id = impl_->fresh_session_id();
        } else if (!is_initialize && !impl_->session_exists(session_id)) {
            res.set_header("Mcp-Session-Id", session_id);
            res.body = error_response(envelope.value("id", json(nullptr)), kInvalidRequest,
                                      "unknown session '" + session_id + "'")
                           .dump();
            return;
        }

        auto& entry = impl_->session_entry(session_id);
        res.set_header("Mcp-Session-Id", session_id);

        json response;
        {
            // Requests within one session are processed in arrival order.
            std::lock_guard<std::mutex> lock(entry.mutex);
            response = impl_->gateway.handle(entry.session, envelope);
        }
        if (response.is_null()) {
            res.status = 202;
            res.body = "";
        } else {
            res.body = response.dump();
        }
    };

    impl_->server.Post("/mcp", handler);
    impl_->server.Post("/", handler);
}

HttpGatewayServer::~HttpGatewayServer() { stop(); }

int HttpGatewayServer::start(const std::string& host, int port) {
    if (port == 0) {
        port_ = impl_->server.bind_to_any_port(host);
    } else {
        if (!impl_->server.bind_to_port(host, port))
            throw Error(Error::Kind::io,
                        "cannot bind to " + host + ":" + std::to_string(port));
        port_ = port;
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port_;
}

void HttpGatewayServer::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
    if (impl_ && impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace toolgate
