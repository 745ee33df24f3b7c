#pragma once

#include <stdexcept>
#include <string>

namespace toolgate {

// Error taxonomy shared across the library. The kind tells callers (CLI,
// gateway) which channel a failure belongs to: protocol errors become
// JSON-RPC errors, everything else surfaces as tool-level or CLI errors.
class Error : public std::runtime_error {
public:
    enum class Kind {
        parse,        // malformed input document
        structural,   // well-formed input violating structural rules
        compile,      // tool compilation failure (e.g. name collision)
        io,           // filesystem failure
        integrity,    // truncated or corrupt persisted file
        version,      // unsupported format_version
        config,       // bad configuration (incl. missing auth)
        provider,     // remote embedding provider failure
        validation,   // argument/schema validation failure
        protocol,     // JSON-RPC / MCP protocol violation
        transport,    // network or process transport loss
        data,         // inconsistent evaluation data
        internal,     // invariant violation
    };

    Error(Kind kind, std::string message)
        : std::runtime_error(std::move(message)), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

    const char* kind_name() const noexcept {
        switch (kind_) {
            case Kind::parse: return "parse";
            case Kind::structural: return "structural";
            case Kind::compile: return "compile";
            case Kind::io: return "io";
            case Kind::integrity: return "integrity";
            case Kind::version: return "version";
            case Kind::config: return "config";
            case Kind::provider: return "provider";
            case Kind::validation: return "validation";
            case Kind::protocol: return "protocol";
            case Kind::transport: return "transport";
            case Kind::data: return "data";
            case Kind::internal: return "internal";
        }
        return "unknown";
    }

private:
    Kind kind_;
};

}  // namespace toolgate
