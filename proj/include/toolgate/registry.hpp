#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "toolgate/tool_spec.hpp"

namespace toolgate {

struct ServiceStats {
    std::size_t tool_count = 0;
    double mean_args = 0.0;
    std::size_t max_args = 0;
    double complex_fraction = 0.0;  // tools with >=1 array/object-typed argument

    json to_json() const;
};

struct RegistryStats : ServiceStats {
    std::map<std::string, ServiceStats> per_service;

    json to_json() const;
};

// Resolves the registry creation timestamp: SOURCE_DATE_EPOCH when set
// (reproducible builds), otherwise the current time.
std::int64_t registry_timestamp();

// The full namespaced tool collection. Iteration order is sorted by name,
// stable across save/load. Immutable once built; rebuild-and-swap to change.
class ToolRegistry {
public:
    static constexpr int kFormatVersion = 1;

    ToolRegistry() = default;
    explicit ToolRegistry(std::int64_t created_at) : created_at_(created_at) {}

    // All-or-nothing insertion; a duplicate name rejects the whole batch.
    void add_tools(const std::vector<ToolSpec>& specs);

    const ToolSpec* find(const std::string& name) const;
    std::size_t size() const { return tools_.size(); }
    bool empty() const { return tools_.empty(); }
    std::int64_t created_at() const { return created_at_; }
    const std::set<std::string>& services() const { return services_; }

    auto begin() const { return tools_.begin(); }
    auto end() const { return tools_.end(); }

    void save(const std::filesystem::path& path) const;
    static ToolRegistry load(const std::filesystem::path& path);

    RegistryStats stats() const;

    bool operator==(const ToolRegistry&) const = default;

private:
    std::map<std::string, ToolSpec> tools_;
    std::set<std::string> services_;
    std::int64_t created_at_ = 0;
};

}  // namespace toolgate
