#include "toolgate/trace.hpp"

#include <chrono>
#include <sstream>

#include "toolgate/errors.hpp"

namespace toolgate {

namespace {

std::int64_t now_millis() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

}  // namespace

json TraceEvent::to_json() const {
    switch (kind) {
        case Kind::finder:
            return {{"type", "finder_event"}, {"query", query}, {"hits", hits}};
        case Kind::call:
            return {{"type", "call_event"}, {"tool", tool}, {"ok", ok}};
        case Kind::step:
            return {{"type", "step_event"}};
    }
    return {{"type", "step_event"}};
}

TraceEvent TraceEvent::from_json(const json& j) {
    const std::string type = j.value("type", "");
    TraceEvent event;
    if (type == "finder_event") {
        event.kind = Kind::finder;
        event.query = j.value("query", "");
        for (const auto& hit : j.value("hits", json::array()))
            if (hit.is_string()) event.hits.push_back(hit.get<std::string>());
    } else if (type == "call_event") {
        event.kind = Kind::call;
        event.tool = j.value("tool", "");
        event.ok = j.value("ok", false);
    } else if (type == "step_event") {
        event.kind = Kind::step;
    } else {
        throw Error(Error::Kind::parse, "unknown trace event type: '" + type + "'");
    }
    return event;
}

void RunTrace::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Error::Kind::io, "cannot write trace file: " + path.string());
    out << json{{"format_version", kFormatVersion}, {"task_id", task_id}}.dump() << "\n";
    for (const auto& event : events) out << event.to_json().dump() << "\n";
    json footer = {{"type", "completed"},
                   {"value", completed},
                   {"checkpoints", checkpoints_earned}};
    if (token_cost) footer["token_cost"] = *token_cost;
    out << footer.dump() << "\n";
}

RunTrace RunTrace::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Error::Kind::io, "cannot read trace file: " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str(), path.string());
}

RunTrace RunTrace::parse(const std::string& ndjson, const std::string& origin) {
    std::istringstream in(ndjson);
    std::string line;
    if (!std::getline(in, line) || line.empty())
        throw Error(Error::Kind::integrity, "trace is empty: " + origin);

    json header;
    try {
        header = json::parse(line);
    } catch (const json::parse_error& e) {
        throw Error(Error::Kind::integrity,
                    "trace header is not valid JSON: " + std::string(e.what()));
    }
    const int version = header.value("format_version", -1);
    if (version != kFormatVersion)
        throw Error(Error::Kind::version, "trace format_version " + std::to_string(version) +
                                              " is not supported");

    RunTrace trace;
    trace.task_id = header.value("task_id", "");
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json entry;
        try {
            entry = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(Error::Kind::integrity, "trace line " + std::to_string(line_no) +
                                                    " is corrupt: " + e.what());
        }
        const std::string type = entry.value("type", "");
        if (type == "completed") {
            trace.completed = entry.value("value", false);
            for (const auto& cp : entry.value("checkpoints", json::array()))
                if (cp.is_string()) trace.checkpoints_earned.insert(cp.get<std::string>());
            if (entry.contains("token_cost") && entry["token_cost"].is_number())
                trace.token_cost = entry["token_cost"].get<double>();
        } else {
            trace.events.push_back(TraceEvent::from_json(entry));
        }
    }
    return trace;
}

TraceLog::TraceLog(const std::filesystem::path& path)
    : out_(std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::app)) {
    if (!*out_) throw Error(Error::Kind::io, "cannot open trace log: " + path.string());
}

void TraceLog::finder_event(const std::string& session, const std::string& query,
                            const std::vector<std::string>& hits) {
    append({{"type", "finder_event"},
            {"ts", now_millis()},
            {"session", session},
            {"query", query},
            {"hits", hits}});
}

void TraceLog::call_event(const std::string& session, const std::string& tool, bool ok) {
    append({{"type", "call_event"},
            {"ts", now_millis()},
            {"session", session},
            {"tool", tool},
            {"ok", ok}});
}

void TraceLog::append(json event) {
    if (!out_) return;
    std::lock_guard<std::mutex> lock(mutex_);
    *out_ << event.dump() << "\n";
    out_->flush();
}

}  // namespace toolgate
