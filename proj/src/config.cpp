#include "toolgate/config.hpp"

#include <fstream>

#include "toolgate/errors.hpp"

namespace toolgate {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::string& value) {
    std::filesystem::path p(value);
    if (p.is_absolute() || base.empty()) return p;
    return base / p;
}

}  // namespace

GatewayConfig GatewayConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object())
        throw Error(Error::Kind::config, "config root must be a JSON object");

    GatewayConfig cfg;
    if (!j.contains("registry") || !j["registry"].is_string())
        throw Error(Error::Kind::config, "config field 'registry' (path) is required");
    cfg.registry_path = resolve(base_dir, j["registry"].get<std::string>());

    if (!j.contains("index") || !j["index"].is_string())
        throw Error(Error::Kind::config, "config field 'index' (path) is required");
    cfg.index_path = resolve(base_dir, j["index"].get<std::string>());

    if (j.contains("embedder")) cfg.embedder = EmbedderConfig::from_json(j["embedder"]);

    const std::string mode = j.value("mode", "permissive");
    if (mode == "strict")
        cfg.options.strict = true;
    else if (mode == "permissive")
        cfg.options.strict = false;
    else
        throw Error(Error::Kind::config,
                    "config field 'mode' must be 'permissive' or 'strict', got '" + mode + "'");

    cfg.options.default_top_k = j.value("top_k", cfg.options.default_top_k);
    if (cfg.options.default_top_k < 1)
        throw Error(Error::Kind::config, "config field 'top_k' must be >= 1");
    cfg.options.truncate_bytes = j.value("truncate_bytes", cfg.options.truncate_bytes);

    if (j.contains("services")) {
        if (!j["services"].is_object())
            throw Error(Error::Kind::config, "config field 'services' must be an object");
        for (const auto& [name, svc] : j["services"].items())
            cfg.services[name] = ServiceConfig::from_json(svc);
    }
    for (const auto& d : j.value("downstream", json::array()))
        cfg.downstreams.push_back(DownstreamDescriptor::from_json(d));

    if (j.contains("trace") && j["trace"].is_string())
        cfg.trace_path = resolve(base_dir, j["trace"].get<std::string>());
    return cfg;
}

GatewayConfig GatewayConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Error::Kind::io, "cannot read config file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw Error(Error::Kind::config,
                    "config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j, path.parent_path());
}

}  // namespace toolgate
