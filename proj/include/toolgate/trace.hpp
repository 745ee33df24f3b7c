#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace toolgate {

using json = nlohmann::json;

// One entry in a run trace. finder events carry the query and hit names;
// call events carry the tool and outcome; step events mark agent steps.
struct TraceEvent {
    enum class Kind { finder, call, step };

    Kind kind = Kind::step;
    std::string query;
    std::vector<std::string> hits;
    std::string tool;
    bool ok = true;

    json to_json() const;
    static TraceEvent from_json(const json& j);
};

// A task run: the gateway's live event log plus agent-side completion
// markers.
struct RunTrace {
    static constexpr int kFormatVersion = 1;

    std::string task_id;
    std::vector<TraceEvent> events;
    bool completed = false;
    std::set<std::string> checkpoints_earned;
    std::optional<double> token_cost;

    void save(const std::filesystem::path& path) const;
    static RunTrace load(const std::filesystem::path& path);
    static RunTrace parse(const std::string& ndjson, const std::string& origin);
};

// Append-only NDJSON event sink the gateway writes while serving. Safe for
// concurrent sessions.
class TraceLog {
public:
    TraceLog() = default;
    explicit TraceLog(const std::filesystem::path& path);

    bool enabled() const { return static_cast<bool>(out_); }

    void finder_event(const std::string& session, const std::string& query,
                      const std::vector<std::string>& hits);
    void call_event(const std::string& session, const std::string& tool, bool ok);

private:
    void append(json event);

    std::unique_ptr<std::ofstream> out_;
    std::mutex mutex_;
};

}  // namespace toolgate
