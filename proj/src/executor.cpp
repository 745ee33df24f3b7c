#include "toolgate/executor.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <sstream>
#include <thread>

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>

#include "toolgate/errors.hpp"
#include "toolgate/url.hpp"

namespace toolgate {

namespace {

std::string scalar_to_string(const json& value) {
    if (value.is_string()) return value.get<std::string>();
    return value.dump();
}

std::string body_excerpt(const std::string& body, std::size_t limit = 512) {
    if (body.size() <= limit) return body;
    return body.substr(0, limit) + "...";
}

}  // namespace

std::string CallOutcome::status_name(Status status) {
    switch (status) {
        case Status::ok: return "ok";
        case Status::upstream_error: return "upstream_error";
        case Status::transport_error: return "transport_error";
        case Status::validation_error: return "validation_error";
    }
    return "unknown";
}

ServiceConfig ServiceConfig::from_json(const json& j) {
    ServiceConfig cfg;
    cfg.base_url = j.value("base_url", "");
    cfg.auth_header = j.value("auth_header", "");
    cfg.auth_scheme = j.value("auth_scheme", "");
    cfg.auth_env = j.value("auth_env", "");
    cfg.policy.timeout_sec = j.value("timeout_sec", cfg.policy.timeout_sec);
    cfg.policy.max_retries = j.value("max_retries", cfg.policy.max_retries);
    return cfg;
}

json ServiceConfig::to_json() const {
    return {{"base_url", base_url},       {"auth_header", auth_header},
            {"auth_scheme", auth_scheme}, {"auth_env", auth_env},
            {"timeout_sec", policy.timeout_sec}, {"max_retries", policy.max_retries}};
}

HttpRequestSpec render_http_request(const ToolSpec& spec, const json& arguments,
                                    const ServiceConfig* service) {
    const auto* binding = std::get_if<HttpBinding>(&spec.binding);
    if (!binding)
        throw Error(Error::Kind::internal,
                    "render_http_request called on a non-HTTP binding for tool '" + spec.name +
                        "'");

    std::string path = binding->path_template;
    std::string query;
    json body_object = json::object();
    json whole_body;
    bool has_whole_body = false;
    bool has_body_props = false;
    std::vector<std::pair<std::string, std::string>> headers;

    auto append_query = [&query](const std::string& key, const std::string& value) {
        query += query.empty() ? "?" : "&";
        query += percent_encode(key) + "=" + percent_encode(value);
    };

    for (const auto& param : binding->params) {
        const auto it = arguments.find(param.arg);
        if (it == arguments.end()) {
            if (param.location == ParamLocation::path)
                throw Error(Error::Kind::internal,
                            "path parameter '" + param.arg + "' missing after validation");
            continue;
        }
        switch (param.location) {
            case ParamLocation::path: {
                const std::string marker = "{" + param.source + "}";
                const auto pos = path.find(marker);
                if (pos == std::string::npos)
                    throw Error(Error::Kind::internal,
                                "path template has no slot for '" + param.source + "'");
                path.replace(pos, marker.size(), percent_encode(scalar_to_string(*it)));
                break;
            }
            case ParamLocation::query: {
                if (it->is_array()) {
                    for (const auto& item : *it)
                        append_query(param.source, scalar_to_string(item));
                } else {
                    append_query(param.source, scalar_to_string(*it));
                }
                break;
            }
            case ParamLocation::header:
                headers.emplace_back(param.source, scalar_to_string(*it));
                break;
            case ParamLocation::body:
                if (param.source.empty()) {
                    whole_body = *it;
                    has_whole_body = true;
                } else {
                    body_object[param.source] = *it;
                    has_body_props = true;
                }
                break;
        }
    }

    if (path.find('{') != std::string::npos)
        throw Error(Error::Kind::internal,
                    "unresolved path parameter in rendered path: " + path);

    std::string base = binding->base_url;
    if (service && !service->base_url.empty()) base = service->base_url;
    if (base.empty())
        throw Error(Error::Kind::config, "tool '" + spec.name + "' has no base URL configured");
    while (base.size() > 1 && base.back() == '/') base.pop_back();

    if (service && !service->auth_header.empty()) {
        const char* secret =
            service->auth_env.empty() ? nullptr : std::getenv(service->auth_env.c_str());
        if (secret && *secret) {
            std::string value = secret;
            if (!service->auth_scheme.empty()) value = service->auth_scheme + " " + value;
            headers.emplace_back(service->auth_header, value);
        }
    }

    HttpRequestSpec request;
    request.method = binding->method;
    const SplitUrl split = split_url(base);
    request.origin = split.origin;
    std::string prefix = split.path == "/" ? "" : split.path;
    request.target = prefix + path + query;
    request.headers = std::move(headers);
    if (has_whole_body)
        request.body = whole_body.dump();
    else if (has_body_props)
        request.body = body_object.dump();
    return request;
}

CallOutcome execute_http(const HttpRequestSpec& request, const RetryPolicy& policy) {
    CallOutcome outcome;
    const auto started = std::chrono::steady_clock::now();
    auto finish = [&](CallOutcome::Status status, std::string payload,
                      std::optional<int> code) {
        outcome.status = status;
        outcome.payload = std::move(payload);
        outcome.upstream_code = code;
        outcome.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - started);
        return outcome;
    };

    // Mutations are never retried; a lost response might mean the action
    // already happened upstream.
    const bool idempotent = request.method == "GET" || request.method == "HEAD";
    const int max_attempts = idempotent ? 1 + std::max(0, policy.max_retries) : 1;

    httplib::Error last_error = httplib::Error::Success;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        outcome.attempts = attempt;
        httplib::Client client(request.origin);
        client.set_connection_timeout(policy.timeout_sec, 0);
        client.set_read_timeout(policy.timeout_sec, 0);
        client.set_write_timeout(policy.timeout_sec, 0);

        httplib::Request req;
        req.method = request.method;
        req.path = request.target;
        for (const auto& [key, value] : request.headers) req.headers.emplace(key, value);
        if (!request.body.empty()) {
            req.body = request.body;
            req.headers.emplace("Content-Type", request.content_type);
        }

        auto result = client.send(req);
        if (result) {
            const int status = result->status;
            if (status >= 200 && status < 300) return finish(CallOutcome::Status::ok, result->body, status);
            return finish(CallOutcome::Status::upstream_error,
                          "upstream returned status " + std::to_string(status) + ": " +
                              body_excerpt(result->body),
                          status);
        }
        last_error = result.error();
        if (attempt < max_attempts)
            std::this_thread::sleep_for(std::chrono::milliseconds(50L * attempt));
    }
    return finish(CallOutcome::Status::transport_error,
                  "transport failure: " + httplib::to_string(last_error) + " (" +
                      request.method + " " + request.url() + ")",
                  std::nullopt);
}

// ---------------------------------------------------------------------------
// Downstream MCP transports

namespace {

std::atomic<std::int64_t> g_rpc_id{1};

class HttpMcpTransport final : public McpTransport {
public:
    HttpMcpTransport(std::string url, int timeout_sec)
        : url_(split_url(url)), timeout_sec_(timeout_sec) {}

    json rpc(const std::string& method, const json& params) override {
        const json envelope = {{"jsonrpc", "2.0"},
                               {"id", g_rpc_id.fetch_add(1)},
                               {"method", method},
                               {"params", params}};
        httplib::Client client(url_.origin);
        client.set_connection_timeout(timeout_sec_, 0);
        client.set_read_timeout(timeout_sec_, 0);
        httplib::Headers headers;
        if (!session_id_.empty()) headers.emplace("Mcp-Session-Id", session_id_);
        auto res = client.Post(url_.path, headers, envelope.dump(), "application/json");
        if (!res)
            throw Error(Error::Kind::transport,
                        "downstream MCP server unreachable: " + url_.origin);
        if (auto it = res->headers.find("Mcp-Session-Id"); it != res->headers.end())
            session_id_ = it->second;
        if (res->status < 200 || res->status >= 300)
            throw Error(Error::Kind::transport, "downstream MCP server returned status " +
                                                    std::to_string(res->status));
        json reply;
        try {
            reply = json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw Error(Error::Kind::transport,
                        std::string("downstream reply is not valid JSON: ") + e.what());
        }
        if (reply.contains("error"))
            throw Error(Error::Kind::protocol, reply["error"].dump());
        return reply.value("result", json::object());
    }

    void notify(const std::string& method, const json& params) override {
        const json envelope = {{"jsonrpc", "2.0"}, {"method", method}, {"params", params}};
        httplib::Client client(url_.origin);
        client.set_connection_timeout(timeout_sec_, 0);
        httplib::Headers headers;
        if (!session_id_.empty()) headers.emplace("Mcp-Session-Id", session_id_);
        client.Post(url_.path, headers, envelope.dump(), "application/json");
    }

    bool alive() const override { return true; }

private:
    SplitUrl url_;
    int timeout_sec_;
    std::string session_id_;
};

// Child process speaking newline-delimited JSON-RPC on stdin/stdout.
class StdioMcpTransport final : public McpTransport {
public:
    StdioMcpTransport(const std::string& command, int timeout_sec)
        : timeout_sec_(timeout_sec) {
        std::vector<std::string> argv_storage;
        std::istringstream split(command);
        std::string word;
        while (split >> word) argv_storage.push_back(word);
        if (argv_storage.empty())
            throw Error(Error::Kind::config, "empty downstream command");

        int to_child[2];
        int from_child[2];
        if (pipe(to_child) != 0 || pipe(from_child) != 0)
            throw Error(Error::Kind::transport, "pipe() failed for downstream process");

        pid_ = fork();
        if (pid_ < 0) throw Error(Error::Kind::transport, "fork() failed");
        if (pid_ == 0) {
            dup2(to_child[0], STDIN_FILENO);
            dup2(from_child[1], STDOUT_FILENO);
            close(to_child[0]);
            close(to_child[1]);
            close(from_child[0]);
            close(from_child[1]);
            std::vector<char*> argv;
            argv.reserve(argv_storage.size() + 1);
            for (auto& arg : argv_storage) argv.push_back(arg.data());
            argv.push_back(nullptr);
            execvp(argv[0], argv.data());
            std::perror("execvp");
            _exit(127);
        }
        close(to_child[0]);
        close(from_child[1]);
        in_fd_ = to_child[1];
        out_fd_ = from_child[0];
    }

    ~StdioMcpTransport() override {
        if (in_fd_ >= 0) close(in_fd_);
        if (out_fd_ >= 0) close(out_fd_);
        if (pid_ > 0) {
            int status = 0;
            if (waitpid(pid_, &status, WNOHANG) == 0) {
                kill(pid_, SIGTERM);
                waitpid(pid_, &status, 0);
            }
        }
    }

    json rpc(const std::string& method, const json& params) override {
        const std::int64_t id = g_rpc_id.fetch_add(1);
        const json envelope = {
            {"jsonrpc", "2.0"}, {"id", id}, {"method", method}, {"params", params}};
        write_line(envelope.dump());
        for (;;) {
            const std::string line = read_line();
            json reply;
            try {
                reply = json::parse(line);
            } catch (const json::parse_error&) {
                continue;  // tolerate stray non-JSON output
            }
            if (!reply.contains("id") || reply["id"] != id) continue;
            if (reply.contains("error"))
                throw Error(Error::Kind::protocol, reply["error"].dump());
            return reply.value("result", json::object());
        }
    }

    void notify(const std::string& method, const json& params) override {
        write_line(json{{"jsonrpc", "2.0"}, {"method", method}, {"params", params}}.dump());
    }

    bool alive() const override {
        if (pid_ <= 0) return false;
        int status = 0;
        return waitpid(pid_, &status, WNOHANG) == 0;
    }

private:
    void write_line(const std::string& line) {
        std::string payload = line + "\n";
        std::size_t written = 0;
        while (written < payload.size()) {
            const ssize_t n = write(in_fd_, payload.data() + written, payload.size() - written);
            if (n <= 0)
                throw Error(Error::Kind::transport, "downstream process closed its stdin");
            written += static_cast<std::size_t>(n);
        }
    }

    std::string read_line() {
        std::string line;
        const auto deadline =
            std::chrono::steady_clock::now() + std::chrono::seconds(timeout_sec_);
        for (;;) {
            const auto nl = buffer_.find('\n');
            if (nl != std::string::npos) {
                line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                return line;
            }
            if (std::chrono::steady_clock::now() > deadline)
                throw Error(Error::Kind::transport, "timeout waiting for downstream reply");
            char chunk[4096];
            const ssize_t n = read(out_fd_, chunk, sizeof(chunk));
            if (n <= 0)
                throw Error(Error::Kind::transport,
                            "downstream process exited mid-call (stdout closed)");
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

    pid_t pid_ = -1;
    int in_fd_ = -1;
    int out_fd_ = -1;
    int timeout_sec_;
    std::string buffer_;
};

std::string mcp_content_text(const json& result) {
    std::string text;
    for (const auto& block : result.value("content", json::array())) {
        if (block.value("type", "") == "text") {
            if (!text.empty()) text += "\n";
            text += block.value("text", "");
        }
    }
    return text;
}

}  // namespace

DownstreamDescriptor DownstreamDescriptor::from_json(const json& j) {
    DownstreamDescriptor desc;
    desc.id = j.value("id", "");
    const std::string transport = j.value("transport", "");
    if (transport == "stdio") {
        desc.kind = Kind::stdio;
        desc.command = j.value("command", "");
        if (desc.command.empty())
            throw Error(Error::Kind::config, "stdio downstream '" + desc.id + "' needs a command");
    } else if (transport == "http") {
        desc.kind = Kind::http;
        desc.url = j.value("url", "");
        if (desc.url.empty())
            throw Error(Error::Kind::config, "http downstream '" + desc.id + "' needs a url");
    } else {
        throw Error(Error::Kind::config,
                    "downstream '" + desc.id + "' has unknown transport '" + transport + "'");
    }
    if (desc.id.empty()) throw Error(Error::Kind::config, "downstream server needs an id");
    return desc;
}

std::shared_ptr<McpTransport> connect_transport(const DownstreamDescriptor& desc,
                                                int timeout_sec) {
    if (desc.kind == DownstreamDescriptor::Kind::stdio)
        return std::make_shared<StdioMcpTransport>(desc.command, timeout_sec);
    return std::make_shared<HttpMcpTransport>(desc.url, timeout_sec);
}

DownstreamServer register_downstream(const DownstreamDescriptor& desc) {
    DownstreamServer server;
    server.id = desc.id;
    server.descriptor = desc;
    server.transport = connect_transport(desc);

    const json init_params = {{"protocolVersion", "2024-11-05"},
                              {"capabilities", json::object()},
                              {"clientInfo", {{"name", "toolgate"}, {"version", "0.1.0"}}}};
    server.transport->rpc("initialize", init_params);
    server.transport->notify("notifications/initialized", json::object());

    const json tools = server.transport->rpc("tools/list", json::object());
    for (const auto& tool : tools.value("tools", json::array())) {
        const std::string name = tool.value("name", "");
        if (name.empty()) continue;
        json entry = {{"description", tool.value("description", "")},
                      {"inputSchema", tool.value("inputSchema",
                                                 json{{"type", "object"},
                                                      {"properties", json::object()}})}};
        server.advertised.emplace_back(name, std::move(entry));
    }
    if (server.advertised.empty())
        std::cerr << "warning: downstream server '" << desc.id << "' advertises no tools\n";
    return server;
}

std::vector<ToolSpec> compile_downstream_tools(const DownstreamServer& server,
                                               const ToolRegistry& registry) {
    std::vector<ToolSpec> specs;
    std::set<std::string> batch_names;
    for (const auto& [advertised_name, entry] : server.advertised) {
        std::string name = sanitize_identifier(advertised_name);
        if (name.empty()) name = "tool_" + short_hash4(advertised_name);
        if (registry.find(name) || batch_names.count(name))
            name = sanitize_identifier(server.id) + "_" + name;
        if (name.size() > kMaxToolNameLength) {
            const std::string suffix = "_" + short_hash4(advertised_name);
            name.resize(kMaxToolNameLength - suffix.size());
            name += suffix;
        }
        if (registry.find(name) || !batch_names.insert(name).second)
            throw Error(Error::Kind::compile,
                        "cannot derive a unique name for downstream tool '" + advertised_name +
                            "' of server '" + server.id + "'");

        ToolSpec spec;
        spec.name = name;
        std::string description = entry.value("description", "");
        spec.description = description.empty() ? kNoDescriptionPlaceholder : description;
        spec.arguments = entry.value("inputSchema",
                                     json{{"type", "object"}, {"properties", json::object()}});
        spec.binding = McpProxyBinding{server.id, advertised_name};
        spec.service = server.id;
        specs.push_back(std::move(spec));
    }
    return specs;
}

CallOutcome proxy_mcp(const DownstreamServer& server, const std::string& tool,
                      const json& arguments) {
    CallOutcome outcome;
    const auto started = std::chrono::steady_clock::now();
    auto finish = [&](CallOutcome::Status status, std::string payload,
                      std::optional<int> code) {
        outcome.status = status;
        outcome.payload = std::move(payload);
        outcome.upstream_code = code;
        outcome.attempts = 1;
        outcome.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - started);
        return outcome;
    };

    const bool advertised = std::any_of(server.advertised.begin(), server.advertised.end(),
                                        [&](const auto& t) { return t.first == tool; });
    if (!advertised)
        return finish(CallOutcome::Status::validation_error,
                      "tool '" + tool + "' is not advertised by downstream server '" +
                          server.id + "'",
                      std::nullopt);
    if (!server.transport || !server.transport->alive())
        return finish(CallOutcome::Status::transport_error,
                      "downstream server '" + server.id + "' is not running", std::nullopt);

    try {
        const json result =
            server.transport->rpc("tools/call", {{"name", tool}, {"arguments", arguments}});
        const std::string text = mcp_content_text(result);
        if (result.value("isError", false))
            return finish(CallOutcome::Status::upstream_error,
                          text.empty() ? "downstream tool reported an error" : text,
                          std::nullopt);
        return finish(CallOutcome::Status::ok, text, std::nullopt);
    } catch (const Error& e) {
        if (e.kind() == Error::Kind::transport)
            return finish(CallOutcome::Status::transport_error, e.what(), std::nullopt);
        return finish(CallOutcome::Status::upstream_error, e.what(), std::nullopt);
    }
}

void Executor::set_service_config(const std::string& service, ServiceConfig config) {
    services_[service] = std::move(config);
}

const ServiceConfig* Executor::service_config(const std::string& service) const {
    const auto it = services_.find(service);
    return it == services_.end() ? nullptr : &it->second;
}

void Executor::add_downstream(DownstreamServer server) {
    downstreams_[server.id] = std::move(server);
}

const DownstreamServer* Executor::downstream(const std::string& id) const {
    const auto it = downstreams_.find(id);
    return it == downstreams_.end() ? nullptr : &it->second;
}

CallOutcome Executor::dispatch(const ToolSpec& spec, const json& arguments) const {
    if (std::holds_alternative<HttpBinding>(spec.binding)) {
        const ServiceConfig* service = service_config(spec.service);
        RetryPolicy policy = service ? service->policy : RetryPolicy{};
        try {
            const HttpRequestSpec request = render_http_request(spec, arguments, service);
            return execute_http(request, policy);
        } catch (const Error& e) {
            CallOutcome outcome;
            outcome.status = e.kind() == Error::Kind::internal
                                 ? CallOutcome::Status::validation_error
                                 : CallOutcome::Status::transport_error;
            if (e.kind() == Error::Kind::config)
                outcome.status = CallOutcome::Status::validation_error;
            outcome.payload = e.what();
            outcome.attempts = 0;
            return outcome;
        }
    }
    const auto& mcp = std::get<McpProxyBinding>(spec.binding);
    const DownstreamServer* server = downstream(mcp.server_id);
    if (!server) {
        CallOutcome outcome;
        outcome.status = CallOutcome::Status::validation_error;
        outcome.payload = "downstream server '" + mcp.server_id + "' is not registered";
        return outcome;
    }
    return proxy_mcp(*server, mcp.tool, arguments);
}

}  // namespace toolgate
