#pragma once

#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <set>
#include <string>

#include "toolgate/executor.hpp"
#include "toolgate/index.hpp"
#include "toolgate/registry.hpp"
#include "toolgate/trace.hpp"

namespace toolgate {

// Per-connection state. retrieved_tools only grows; counters are monotone.
struct GatewaySession {
    std::string id;
    bool initialized = false;
    std::set<std::string> retrieved_tools;
    std::uint64_t tool_finder_calls = 0;
    std::uint64_t call_tool_calls = 0;
    std::uint64_t failed_calls = 0;
};

struct GatewayOptions {
    bool strict = false;       // only allow calling tools the session retrieved
    int default_top_k = 10;
    std::size_t truncate_bytes = 64 * 1024;
    std::string server_name = "toolgate";
    std::string server_version = "0.1.0";
};

// The MCP server agents connect to. Exposes exactly two tools, tool_finder
// and call_tool, over the full registry. Shared state (registry, index,
// executor) is read-only; sessions are confined to their connection.
class Gateway {
public:
    Gateway(const ToolRegistry& registry, const ToolIndex& index, const Executor& executor,
            GatewayOptions options = {}, TraceLog* trace = nullptr);

    // Handles one JSON-RPC envelope. Returns the response, or a null json
    // for notifications (nothing must be written).
    json handle(GatewaySession& session, const json& envelope) const;

    // Convenience for line-oriented transports: parse, dispatch, serialize.
    // Parse failures yield a JSON-RPC parse error response.
    std::string handle_line(GatewaySession& session, const std::string& line) const;

    // The two gateway tool descriptors.
    json tools_list() const;

    // Direct entry points (also used by the CLI's one-shot commands).
    json tool_finder(GatewaySession& session, const std::string& query, int top_k) const;
    json call_tool(GatewaySession& session, const std::string& tool_name,
                   const json& arguments) const;

    const GatewayOptions& options() const { return options_; }
    const ToolRegistry& registry() const { return registry_; }

    static const std::vector<std::string>& supported_protocol_versions();

private:
    json dispatch(GatewaySession& session, const json& envelope) const;
    json handle_initialize(GatewaySession& session, const json& params) const;
    json tool_result_text(const std::string& text, bool is_error) const;

    const ToolRegistry& registry_;
    const ToolIndex& index_;
    const Executor& executor_;
    GatewayOptions options_;
    TraceLog* trace_;
};

// Serves newline-delimited JSON-RPC on an istream/ostream pair; one session
// per stream. Logs go to stderr only.
void serve_stdio(const Gateway& gateway, std::istream& in, std::ostream& out);

// HTTP transport: POST /mcp with one envelope per request; sessions are
// keyed by the Mcp-Session-Id header. The server assigns the id on
// initialize and echoes it back.
class HttpGatewayServer {
public:
    explicit HttpGatewayServer(const Gateway& gateway);
    ~HttpGatewayServer();

    // Binds and serves on a background thread. Port 0 picks a free port.
    int start(const std::string& host, int port);
    void stop();
    int port() const { return port_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

}  // namespace toolgate
