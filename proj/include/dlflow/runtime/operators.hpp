#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dlflow/physical/plan.hpp"
#include "dlflow/runtime/udf.hpp"
#include "dlflow/runtime/vertex_store.hpp"

namespace dlflow::runtime {

struct OperatorContext {
    std::int64_t iteration = 0;
    /// The btree an index join, bulk load or update works on.
    VertexStore* store = nullptr;
    /// Tolerance for vector equality in selections without a task hook.
    double float_tolerance = 0.0;
};

/// Delivered inputs of one operator, per partition.
struct OperatorInputs {
    /// Schema of the main input before the operator's input map.
    std::vector<std::string> schema;
    std::vector<std::vector<Tuple>> partitions;
    /// Second main input (hash_join build side).
    std::vector<std::string> right_schema;
    std::vector<std::vector<Tuple>> right;
    /// Side input seen whole by every partition.
    std::vector<std::string> side_schema;
    std::vector<Tuple> side;
};

/// Runs a non-source operator partition by partition on the calling thread.
std::vector<std::vector<Tuple>> run_operator(const physical::PhysicalOperator& op, const OperatorInputs& in,
                                             const UdfRegistry& udfs, const OperatorContext& ctx = {});

/// Comparison semantics shared with selections: =, == and != go through the
/// registry's payload equality; orderings compare numbers numerically.
bool compare_values(const std::string& op, const Value& a, const Value& b, const UdfRegistry& udfs,
                    double tolerance = 0.0);

}  // namespace dlflow::runtime
