#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "toolgate/registry.hpp"
#include "toolgate/tool_spec.hpp"

namespace toolgate {

struct RetryPolicy {
    int timeout_sec = 30;
    int max_retries = 2;  // connect-level failures only, and only for GET/HEAD
};

// Per-service upstream settings. Auth material is resolved through an
// environment variable at call time and never appears in tool arguments.
struct ServiceConfig {
    std::string base_url;     // overrides the compiled binding when set
    std::string auth_header;  // e.g. "Authorization" or "PRIVATE-TOKEN"
    std::string auth_scheme;  // e.g. "Bearer"; prepended when non-empty
    std::string auth_env;     // environment variable holding the credential
    RetryPolicy policy;

    static ServiceConfig from_json(const json& j);
    json to_json() const;
};

struct CallOutcome {
    enum class Status { ok, upstream_error, transport_error, validation_error };

    Status status = Status::ok;
    std::string payload;  // response body or error detail
    std::optional<int> upstream_code;
    std::chrono::milliseconds latency{0};
    int attempts = 0;

    bool ok() const { return status == Status::ok; }
    static std::string status_name(Status status);
};

struct HttpRequestSpec {
    std::string method;
    std::string origin;  // scheme://host[:port]
    std::string target;  // /path?query
    std::vector<std::pair<std::string, std::string>> headers;
    std::string body;
    std::string content_type = "application/json";

    std::string url() const { return origin + target; }
};

// Renders the upstream HTTP request for a compiled tool: path parameters
// substituted percent-encoded, query arrays as repeated keys, body
// arguments assembled into a JSON object. Arguments must already be
// schema-valid.
HttpRequestSpec render_http_request(const ToolSpec& spec, const json& arguments,
                                    const ServiceConfig* service = nullptr);

// Performs the request. Retries connect-level failures for GET/HEAD only;
// any other method gets exactly one upstream attempt.
CallOutcome execute_http(const HttpRequestSpec& request, const RetryPolicy& policy);

// Minimal JSON-RPC client for a downstream MCP server.
class McpTransport {
public:
    virtual ~McpTransport() = default;
    virtual json rpc(const std::string& method, const json& params) = 0;
    virtual void notify(const std::string& method, const json& params) = 0;
    virtual bool alive() const = 0;
};

struct DownstreamDescriptor {
    std::string id;
    enum class Kind { stdio, http } kind = Kind::http;
    std::string command;  // stdio: argv string, split on spaces
    std::string url;      // http: base endpoint

    static DownstreamDescriptor from_json(const json& j);
};

struct DownstreamServer {
    std::string id;
    DownstreamDescriptor descriptor;
    std::vector<std::pair<std::string, json>> advertised;  // (name, input schema)
    std::shared_ptr<McpTransport> transport;
};

std::shared_ptr<McpTransport> connect_transport(const DownstreamDescriptor& desc,
                                                int timeout_sec = 30);

// MCP handshake + tools/list capture.
DownstreamServer register_downstream(const DownstreamDescriptor& desc);

// Compiles a downstream server's advertised tools into mcp_proxy ToolSpecs,
// prefixing names with the server id on collision, and merges them into the
// registry.
std::vector<ToolSpec> compile_downstream_tools(const DownstreamServer& server,
                                               const ToolRegistry& registry);

// Issues tools/call downstream and maps the result onto a CallOutcome.
CallOutcome proxy_mcp(const DownstreamServer& server, const std::string& tool,
                      const json& arguments);

// Dispatch facade used by the gateway: picks the route from the binding.
class Executor {
public:
    Executor() = default;

    void set_service_config(const std::string& service, ServiceConfig config);
    const ServiceConfig* service_config(const std::string& service) const;

    void add_downstream(DownstreamServer server);
    const DownstreamServer* downstream(const std::string& id) const;

    CallOutcome dispatch(const ToolSpec& spec, const json& arguments) const;

private:
    std::map<std::string, ServiceConfig> services_;
    std::map<std::string, DownstreamServer> downstreams_;
};

}  // namespace toolgate
