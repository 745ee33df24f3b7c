#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "toolgate/embedder.hpp"
#include "toolgate/executor.hpp"
#include "toolgate/gateway.hpp"

namespace toolgate {

// Everything cmd_serve needs, loaded from one JSON file. Secrets are only
// ever referenced through environment-variable names.
struct GatewayConfig {
    std::filesystem::path registry_path;
    std::filesystem::path index_path;
    EmbedderConfig embedder;
    GatewayOptions options;
    std::map<std::string, ServiceConfig> services;
    std::vector<DownstreamDescriptor> downstreams;
    std::filesystem::path trace_path;  // empty disables tracing

    static GatewayConfig load(const std::filesystem::path& path);
    static GatewayConfig from_json(const json& j, const std::filesystem::path& base_dir);
};

}  // namespace toolgate
