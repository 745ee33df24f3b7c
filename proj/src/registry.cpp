#include "toolgate/registry.hpp"

#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include "toolgate/errors.hpp"

namespace toolgate {

namespace {

// Counts top-level argument properties; nested fields do not count.
std::size_t argument_count(const ToolSpec& spec) {
    const auto it = spec.arguments.find("properties");
    if (it == spec.arguments.end() || !it->is_object()) return 0;
    return it->size();
}

bool has_complex_argument(const ToolSpec& spec) {
    const auto it = spec.arguments.find("properties");
    if (it == spec.arguments.end() || !it->is_object()) return false;
    for (const auto& [name, schema] : it->items()) {
        if (!schema.is_object()) continue;
        const std::string type = schema.value("type", "");
        if (type == "array" || type == "object") return true;
    }
    return false;
}

struct StatsAccumulator {
    std::size_t count = 0;
    std::size_t arg_sum = 0;
    std::size_t arg_max = 0;
    std::size_t complex_count = 0;

    void add(const ToolSpec& spec) {
        ++count;
        const std::size_t args = argument_count(spec);
        arg_sum += args;
        arg_max = std::max(arg_max, args);
        if (has_complex_argument(spec)) ++complex_count;
    }

    void fill(ServiceStats& out) const {
        out.tool_count = count;
        out.mean_args = count ? static_cast<double>(arg_sum) / static_cast<double>(count) : 0.0;
        out.max_args = arg_max;
        out.complex_fraction =
            count ? static_cast<double>(complex_count) / static_cast<double>(count) : 0.0;
    }
};

}  // namespace

json ServiceStats::to_json() const {
    return {{"tool_count", tool_count},
            {"mean_args", mean_args},
            {"max_args", max_args},
            {"complex_fraction", complex_fraction}};
}

json RegistryStats::to_json() const {
    json out = ServiceStats::to_json();
    json services = json::object();
    for (const auto& [name, stats] : per_service) services[name] = stats.to_json();
    out["per_service"] = std::move(services);
    return out;
}

std::int64_t registry_timestamp() {
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
        try {
            return std::stoll(epoch);
        } catch (const std::exception&) {
            // fall through to wall clock
        }
    }
    return static_cast<std::int64_t>(std::time(nullptr));
}

void ToolRegistry::add_tools(const std::vector<ToolSpec>& specs) {
    // Validate the whole batch before touching the registry.
    std::set<std::string> incoming;
    for (const auto& spec : specs) {
        if (!is_valid_tool_name(spec.name))
            throw Error(Error::Kind::compile, "invalid tool name: '" + spec.name + "'");
        const auto existing = tools_.find(spec.name);
        if (existing != tools_.end())
            throw Error(Error::Kind::compile,
                        "duplicate tool name '" + spec.name + "' (existing service '" +
                            existing->second.service + "', incoming service '" + spec.service +
                            "')");
        if (!incoming.insert(spec.name).second)
            throw Error(Error::Kind::compile,
                        "duplicate tool name '" + spec.name + "' within one batch (service '" +
                            spec.service + "')");
    }
    for (const auto& spec : specs) {
        services_.insert(spec.service);
        tools_.emplace(spec.name, spec);
    }
}

const ToolSpec* ToolRegistry::find(const std::string& name) const {
    const auto it = tools_.find(name);
    return it == tools_.end() ? nullptr : &it->second;
}

void ToolRegistry::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Error::Kind::io, "cannot write registry file: " + path.string());
    json header = {{"format_version", kFormatVersion},
                   {"created_at", created_at_},
                   {"count", tools_.size()}};
    out << header.dump() << "\n";
    for (const auto& [name, spec] : tools_) out << spec.to_json().dump() << "\n";
    out.flush();
    if (!out) throw Error(Error::Kind::io, "short write to registry file: " + path.string());
}

ToolRegistry ToolRegistry::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Error::Kind::io, "cannot read registry file: " + path.string());

    std::string line;
    if (!std::getline(in, line) || line.empty())
        throw Error(Error::Kind::integrity, "registry file is empty: " + path.string());

    json header;
    try {
        header = json::parse(line);
    } catch (const json::parse_error& e) {
        throw Error(Error::Kind::integrity,
                    "registry header is not valid JSON: " + std::string(e.what()));
    }
    const int version = header.value("format_version", -1);
    if (version != kFormatVersion)
        throw Error(Error::Kind::version,
                    "registry format_version " + std::to_string(version) +
                        " is not supported (expected " + std::to_string(kFormatVersion) + ")");

    ToolRegistry registry(header.value("created_at", std::int64_t{0}));
    std::vector<ToolSpec> specs;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            specs.push_back(ToolSpec::from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw Error(Error::Kind::integrity,
                        "registry line " + std::to_string(line_no) +
                            " is corrupt (truncated file?): " + e.what());
        }
    }
    if (header.contains("count")) {
        const std::size_t expected = header["count"].get<std::size_t>();
        if (specs.size() != expected)
            throw Error(Error::Kind::integrity,
                        "registry holds " + std::to_string(specs.size()) + " tools but header says " +
                            std::to_string(expected) + " (truncated file?)");
    }
    registry.add_tools(specs);
    return registry;
}

RegistryStats ToolRegistry::stats() const {
    StatsAccumulator total;
    std::map<std::string, StatsAccumulator> by_service;
    for (const auto& [name, spec] : tools_) {
        total.add(spec);
        by_service[spec.service].add(spec);
    }
    RegistryStats out;
    total.fill(out);
    for (const auto& [service, acc] : by_service) acc.fill(out.per_service[service]);
    return out;
}

}  // namespace toolgate
