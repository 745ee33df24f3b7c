#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "toolgate/registry.hpp"
#include "toolgate/trace.hpp"

namespace toolgate {

struct Checkpoint {
    std::string id;
    double weight = 1.0;

    bool operator==(const Checkpoint&) const = default;
};

// A benchmark task: its oracle tool set (the annotated tools sufficient to
// solve it) and its scoring checkpoints.
struct TaskRecord {
    std::string task_id;
    std::string description;
    std::set<std::string> oracle_tools;
    std::vector<Checkpoint> checkpoints;
    std::optional<std::string> category;  // primitive | composite | tac
    bool completion_only = false;

    json to_json() const;
    static TaskRecord from_json(const json& j);
    static TaskRecord load(const std::filesystem::path& path);
};

// Checkpoint credit covers half the score, full completion the other half.
// Completion-only tasks score 1 or 0 with no partial credit.
double score_task(const TaskRecord& task, const RunTrace& trace);

// Fraction of oracle tools that appeared in any finder event of the run.
double retrieval_recall(const TaskRecord& task, const RunTrace& trace);

struct RunStats {
    std::size_t steps = 0;
    std::size_t finder_calls = 0;
    std::size_t tools_retrieved_distinct = 0;
    std::size_t call_attempts = 0;
    std::size_t failed_calls = 0;
    double retrieval_recall = 0.0;
    double mean_query_length = 0.0;  // whitespace-token count

    json to_json() const;
};

RunStats compute_run_stats(const RunTrace& trace);
RunStats compute_run_stats(const TaskRecord& task, const RunTrace& trace);

// Rewrites direct upstream tool calls in an NDJSON transcript into
// call_tool invocations. Lines without a rewrite are copied byte-identical.
struct RewriteResult {
    std::string transcript;
    std::size_t rewrites = 0;
};

RewriteResult postprocess_transcript(const std::string& ndjson, const ToolRegistry& registry,
                                     const std::set<std::string>& local_allowlist = {});

struct AggregateRow {
    std::string label;
    std::size_t tasks = 0;
    double mean_score_x100 = 0.0;
    double completion_pct = 0.0;
    double mean_steps = 0.0;
    std::optional<double> mean_cost;
};

struct AggregateReport {
    AggregateRow overall;
    std::vector<AggregateRow> per_category;

    json to_json() const;
    std::string to_table() const;
};

AggregateReport aggregate_report(const std::vector<TaskRecord>& tasks,
                                 const std::vector<RunTrace>& traces);

}  // namespace toolgate
