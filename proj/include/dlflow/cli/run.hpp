#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dlflow/physical/plan.hpp"
#include "dlflow/runtime/execute.hpp"

namespace dlflow::cli {

struct RunSpec {
    std::string task;
    std::vector<std::string> inputs;
    physical::ClusterConfig cluster;
    runtime::Limits limits;
    /// Artifacts are written here when non-empty.
    std::string out_dir;
    bool deterministic = true;

    // pagerank
    int supersteps = 30;
    // bgd-logistic; dim 0 takes the dimension from the data.
    std::size_t dim = 0;
    double lambda = 0.0;
    double eta = 0.1;
    double tol = 0.0;
    int task_iters = 10;

    /// Throws std::invalid_argument on an unknown task, a missing input file
    /// or a bad cluster shape.
    void check() const;
};

struct RunSummary {
    std::string task;
    int iterations = 0;
    bool halted = false;
    double total_wall_ms = 0.0;
    double avg_iter_ms = 0.0;
    int workers = 1;
    /// workers x total wall seconds.
    double worker_seconds = 0.0;
    /// Summed over every counted connector and iteration.
    std::uint64_t shuffled_tuples = 0;
    std::uint64_t shuffled_bytes = 0;

    std::string to_json() const;
};

struct RunOutput {
    RunSummary summary;
    runtime::RunResult result;
};

/// Plans and executes a task. With an output directory, writes ranks.txt or
/// model.txt, metrics.jsonl and summary.json there.
RunOutput run_task(const RunSpec& spec);

struct BenchSpec {
    RunSpec base;
    std::vector<int> workers{1};
    std::vector<physical::ConnectorChoice> connectors{physical::ConnectorChoice::hash_merge};
    std::vector<std::string> agg_trees{"sqrt"};
    std::vector<bool> combiner{true};
    /// Runs per configuration; the fastest counts.
    int repeat = 1;
};

struct BenchRow {
    physical::ClusterConfig cluster;
    RunSummary summary;

    /// One JSON object on one line.
    std::string to_json() const;
};

/// Runs the cross product of the matrix in the order workers, connector,
/// aggregation tree, combiner.
std::vector<BenchRow> bench(const BenchSpec& spec);

/// Aligned text table of bench rows with a header line.
std::string format_bench_table(const std::vector<BenchRow>& rows);

}  // namespace dlflow::cli
