#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlflow/physical/plan.hpp"
#include "dlflow/runtime/dataset.hpp"
#include "dlflow/runtime/exchange.hpp"
#include "dlflow/runtime/udf.hpp"

namespace dlflow::runtime {

struct Limits {
    int max_iters = 100;
    /// Vector equality tolerance in selections when the task sets no hook.
    double float_tolerance = 0.0;
};

struct ExecOptions {
    Limits limits;
    std::size_t spill_budget_bytes = SpillableRun::default_budget;
    std::size_t queue_capacity = 64;
    std::size_t batch_size = 256;
    /// After a halt, run one more step without committing and count what it
    /// would derive.
    bool shadow_step = true;
    /// Keep every step's written partitions and btree contents.
    bool record_trace = false;
};

struct IterationMetrics {
    std::int64_t iter = 0;
    double wall_ms = 0.0;
    /// Keyed by connector label, e.g. "O7->O8".
    std::map<std::string, ConnectorMetrics> connectors;
    std::map<std::string, std::uint64_t> udf_calls;
    /// Size of the halt dataset read by the step (Pregel: active vertices).
    std::optional<std::uint64_t> active_count;
    /// Largest componentwise change of a one-row vector state (IMRU model).
    std::optional<double> model_delta;
    std::uint64_t tuples_written = 0;

    std::string to_json() const;
};

struct IterationTrace {
    std::int64_t iter = 0;
    /// Dataset writes of the step, per partition.
    std::map<std::string, std::vector<std::vector<Tuple>>> written;
    /// Btree partitions after the step's updates.
    std::map<std::string, std::vector<std::vector<Tuple>>> stores;
};

struct ShadowResult {
    bool ran = false;
    /// Tuples the extra step would have written or updated.
    std::uint64_t derived = 0;
};

struct RunResult {
    /// Latest non-empty state of every dataset; a btree dataset holds its
    /// stored tuples.
    std::map<std::string, std::vector<Tuple>> datasets;
    int iterations_executed = 0;
    bool halted = false;
    IterationMetrics init_metrics;
    std::vector<IterationMetrics> iterations;
    ShadowResult shadow;
    std::vector<IterationTrace> trace;

    /// One JSON record per step iteration.
    std::string metrics_jsonl() const;
};

class PlanInvalid : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Runs init once, then the step until the halt condition fires or
/// max_iters steps ran. Workers come from the plan's cluster config.
RunResult execute(const physical::PhysicalPlan& pp, const Catalog& catalog, const UdfRegistry& udfs,
                  const ExecOptions& opts = {});

}  // namespace dlflow::runtime
