#pragma once

#include <cstdint>
#include <vector>

#include "dlflow/runtime/dataset.hpp"
#include "dlflow/runtime/udf.hpp"
#include "dlflow/value.hpp"

namespace dlflow::tasks {

/// Out-neighbours per vertex; vertex ids are the dense range 0..N-1.
using Graph = std::vector<std::vector<std::int64_t>>;

inline constexpr const char* activation_symbol = "ACTIVATION_MSG";

struct PageRankConfig {
    std::int64_t vertices = 0;
    /// Supersteps after activation; vertices stop sending once J reaches it.
    int supersteps = 30;
    /// Sum messages exactly so results do not depend on merge order.
    bool deterministic = true;
};

/// init_vertex, update and combine for the Pregel template. Vertex state is
/// List[rank, superstep, destinations]; a message is List[source, edge, share]
/// where edge -1 is the keep-alive self message and -2 a dangling share.
/// Throws std::invalid_argument when vertices < 1 or supersteps < 1.
runtime::UdfRegistry pagerank_udfs(const PageRankConfig& cfg);

/// (Id, Datum) tuples, Datum the destination list, hash partitioned on Id.
runtime::PartitionedDataset pagerank_input(const Graph& g, int partitions);

/// Rank held in a vertex state.
double rank_of(const Value& state);

/// Ranks by id from (Id, State) tuples; ids never seen keep NaN.
std::vector<double> ranks_from(const std::vector<Tuple>& id_state, std::int64_t vertices);

/// Dense reference: r' = 0.15/N + 0.85 (A^T (r / outdeg) + dangling mass / N),
/// starting from the uniform vector.
std::vector<double> power_iteration(const Graph& g, int steps, double damping = 0.85);

}  // namespace dlflow::tasks
