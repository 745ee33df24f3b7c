#include "toolgate/harness.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "toolgate/errors.hpp"

namespace toolgate {

json TaskRecord::to_json() const {
    json checkpoints_json = json::array();
    for (const auto& cp : checkpoints)
        checkpoints_json.push_back({{"id", cp.id}, {"weight", cp.weight}});
    json out = {{"task_id", task_id},
                {"description", description},
                {"oracle_tools", oracle_tools},
                {"checkpoints", std::move(checkpoints_json)},
                {"completion_only", completion_only}};
    if (category) out["category"] = *category;
    return out;
}

TaskRecord TaskRecord::from_json(const json& j) {
    TaskRecord task;
    task.task_id = j.at("task_id").get<std::string>();
    task.description = j.value("description", "");
    for (const auto& tool : j.value("oracle_tools", json::array()))
        if (tool.is_string()) task.oracle_tools.insert(tool.get<std::string>());
    if (task.oracle_tools.empty())
        throw Error(Error::Kind::data, "task '" + task.task_id + "' has no oracle tools");
    for (const auto& cp : j.value("checkpoints", json::array())) {
        Checkpoint checkpoint;
        if (cp.is_string()) {
            checkpoint.id = cp.get<std::string>();
        } else {
            checkpoint.id = cp.at("id").get<std::string>();
            checkpoint.weight = cp.value("weight", 1.0);
        }
        if (checkpoint.weight <= 0.0)
            throw Error(Error::Kind::data, "checkpoint '" + checkpoint.id + "' of task '" +
                                               task.task_id + "' has non-positive weight");
        task.checkpoints.push_back(std::move(checkpoint));
    }
    if (j.contains("category") && j["category"].is_string())
        task.category = j["category"].get<std::string>();
    task.completion_only = j.value("completion_only", false);
    return task;
}

TaskRecord TaskRecord::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Error::Kind::io, "cannot read task file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw Error(Error::Kind::parse,
                    "task file " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

double score_task(const TaskRecord& task, const RunTrace& trace) {
    if (task.task_id != trace.task_id)
        throw Error(Error::Kind::data, "trace for task '" + trace.task_id +
                                           "' scored against task '" + task.task_id + "'");
    for (const auto& earned : trace.checkpoints_earned) {
        const bool declared =
            std::any_of(task.checkpoints.begin(), task.checkpoints.end(),
                        [&](const Checkpoint& cp) { return cp.id == earned; });
        if (!declared)
            throw Error(Error::Kind::data, "trace earned undeclared checkpoint '" + earned +
                                               "' for task '" + task.task_id + "'");
    }

    if (task.completion_only) return trace.completed ? 1.0 : 0.0;

    double total_weight = 0.0;
    double earned_weight = 0.0;
    for (const auto& cp : task.checkpoints) {
        total_weight += cp.weight;
        if (trace.checkpoints_earned.count(cp.id)) earned_weight += cp.weight;
    }
    // No declared checkpoints degenerates to completion-only.
    if (total_weight == 0.0) return trace.completed ? 1.0 : 0.0;

    return 0.5 * (earned_weight / total_weight) + 0.5 * (trace.completed ? 1.0 : 0.0);
}

double retrieval_recall(const TaskRecord& task, const RunTrace& trace) {
    if (task.task_id != trace.task_id)
        throw Error(Error::Kind::data, "trace for task '" + trace.task_id +
                                           "' scored against task '" + task.task_id + "'");
    if (task.oracle_tools.empty()) return 0.0;
    std::set<std::string> retrieved;
    for (const auto& event : trace.events)
        if (event.kind == TraceEvent::Kind::finder)
            retrieved.insert(event.hits.begin(), event.hits.end());
    std::size_t covered = 0;
    for (const auto& tool : task.oracle_tools)
        if (retrieved.count(tool)) ++covered;
    return static_cast<double>(covered) / static_cast<double>(task.oracle_tools.size());
}

json RunStats::to_json() const {
    return {{"steps", steps},
            {"finder_calls", finder_calls},
            {"tools_retrieved_distinct", tools_retrieved_distinct},
            {"call_attempts", call_attempts},
            {"failed_calls", failed_calls},
            {"retrieval_recall", retrieval_recall},
            {"mean_query_length", mean_query_length}};
}

namespace {

std::size_t whitespace_tokens(const std::string& text) {
    std::istringstream in(text);
    std::string token;
    std::size_t count = 0;
    while (in >> token) ++count;
    return count;
}

}  // namespace

RunStats compute_run_stats(const RunTrace& trace) {
    RunStats stats;
    std::set<std::string> distinct;
    std::size_t query_tokens = 0;
    for (const auto& event : trace.events) {
        switch (event.kind) {
            case TraceEvent::Kind::step:
                ++stats.steps;
                break;
            case TraceEvent::Kind::finder:
                ++stats.finder_calls;
                distinct.insert(event.hits.begin(), event.hits.end());
                query_tokens += whitespace_tokens(event.query);
                break;
            case TraceEvent::Kind::call:
                ++stats.call_attempts;
                if (!event.ok) ++stats.failed_calls;
                break;
        }
    }
    stats.tools_retrieved_distinct = distinct.size();
    stats.mean_query_length =
        stats.finder_calls
            ? static_cast<double>(query_tokens) / static_cast<double>(stats.finder_calls)
            : 0.0;
    return stats;
}

RunStats compute_run_stats(const TaskRecord& task, const RunTrace& trace) {
    RunStats stats = compute_run_stats(trace);
    stats.retrieval_recall = retrieval_recall(task, trace);
    return stats;
}

RewriteResult postprocess_transcript(const std::string& ndjson, const ToolRegistry& registry,
                                     const std::set<std::string>& local_allowlist) {
    RewriteResult result;
    std::istringstream in(ndjson);
    std::ostringstream out;
    std::string line;
    std::size_t line_no = 0;

    auto is_gateway_tool = [](const std::string& name) {
        return name == "tool_finder" || name == "call_tool";
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            out << "\n";
            continue;
        }
        json message;
        try {
            message = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(Error::Kind::parse, "transcript line " + std::to_string(line_no) +
                                                " is not valid JSON: " + e.what());
        }

        bool rewrote = false;
        if (message.is_object() && message.contains("tool_calls")) {
            json& calls = message["tool_calls"];
            if (!calls.is_array())
                throw Error(Error::Kind::parse,
                            "transcript line " + std::to_string(line_no) +
                                ": 'tool_calls' must be an array");
            for (json& call : calls) {
                if (!call.is_object() || !call.contains("name") || !call["name"].is_string())
                    throw Error(Error::Kind::parse,
                                "transcript line " + std::to_string(line_no) +
                                    ": tool call entry needs a 'name' string");
                const std::string name = call["name"].get<std::string>();
                if (is_gateway_tool(name) || local_allowlist.count(name)) continue;
                if (!registry.find(name)) continue;  // not a registered upstream tool
                const json original_args = call.value("arguments", json::object());
                call["name"] = "call_tool";
                call["arguments"] = {{"tool_name", name}, {"arguments", original_args}};
                rewrote = true;
                ++result.rewrites;
            }
        }

        if (rewrote)
            out << message.dump() << "\n";
        else
            out << line << "\n";  // untouched lines stay byte-identical
    }
    result.transcript = out.str();
    return result;
}

namespace {

AggregateRow make_row(const std::string& label,
                      const std::vector<std::pair<const TaskRecord*, const RunTrace*>>& pairs) {
    AggregateRow row;
    row.label = label;
    row.tasks = pairs.size();
    if (pairs.empty()) return row;

    double score_sum = 0.0;
    std::size_t completed = 0;
    double steps_sum = 0.0;
    double cost_sum = 0.0;
    std::size_t cost_count = 0;
    for (const auto& [task, trace] : pairs) {
        score_sum += score_task(*task, *trace);
        if (trace->completed) ++completed;
        steps_sum += static_cast<double>(compute_run_stats(*trace).steps);
        if (trace->token_cost) {
            cost_sum += *trace->token_cost;
            ++cost_count;
        }
    }
    const double n = static_cast<double>(pairs.size());
    row.mean_score_x100 = 100.0 * score_sum / n;
    row.completion_pct = 100.0 * static_cast<double>(completed) / n;
    row.mean_steps = steps_sum / n;
    if (cost_count) row.mean_cost = cost_sum / static_cast<double>(cost_count);
    return row;
}

json row_to_json(const AggregateRow& row) {
    json out = {{"label", row.label},
                {"tasks", row.tasks},
                {"mean_score", row.mean_score_x100},
                {"completion_pct", row.completion_pct},
                {"mean_steps", row.mean_steps}};
    if (row.mean_cost) out["mean_cost"] = *row.mean_cost;
    return out;
}

}  // namespace

json AggregateReport::to_json() const {
    json categories = json::array();
    for (const auto& row : per_category) categories.push_back(row_to_json(row));
    return {{"overall", row_to_json(overall)}, {"per_category", std::move(categories)}};
}

std::string AggregateReport::to_table() const {
    std::ostringstream out;
    auto print_row = [&out](const AggregateRow& row) {
        out << std::left << std::setw(14) << row.label << std::right << std::setw(7)
            << row.tasks << std::setw(12) << std::fixed << std::setprecision(2)
            << row.mean_score_x100 << std::setw(12) << row.completion_pct << std::setw(12)
            << row.mean_steps;
        if (row.mean_cost)
            out << std::setw(12) << *row.mean_cost;
        else
            out << std::setw(12) << "-";
        out << "\n";
    };
    out << std::left << std::setw(14) << "category" << std::right << std::setw(7) << "tasks"
        << std::setw(12) << "score" << std::setw(12) << "completed%" << std::setw(12)
        << "steps" << std::setw(12) << "cost" << "\n";
    print_row(overall);
    for (const auto& row : per_category) print_row(row);
    return out.str();
}

AggregateReport aggregate_report(const std::vector<TaskRecord>& tasks,
                                 const std::vector<RunTrace>& traces) {
    std::map<std::string, const RunTrace*> by_task;
    for (const auto& trace : traces) {
        if (!by_task.emplace(trace.task_id, &trace).second)
            throw Error(Error::Kind::data, "multiple traces for task '" + trace.task_id + "'");
    }

    std::vector<std::pair<const TaskRecord*, const RunTrace*>> all;
    std::map<std::string, std::vector<std::pair<const TaskRecord*, const RunTrace*>>>
        by_category;
    for (const auto& task : tasks) {
        const auto it = by_task.find(task.task_id);
        if (it == by_task.end())
            throw Error(Error::Kind::data, "no trace for task '" + task.task_id + "'");
        all.emplace_back(&task, it->second);
        by_category[task.category.value_or("uncategorized")].emplace_back(&task, it->second);
        by_task.erase(it);
    }
    if (!by_task.empty())
        throw Error(Error::Kind::data,
                    "trace for unknown task '" + by_task.begin()->first + "'");

    AggregateReport report;
    report.overall = make_row("overall", all);
    for (const auto& [category, pairs] : by_category)
        report.per_category.push_back(make_row(category, pairs));
    return report;
}

}  // namespace toolgate
