#pragma once

#include <vector>

namespace dlflow {

/// Strongly connected components of a directed graph given as adjacency lists.
/// Components are returned in reverse topological order (sinks first), each
/// with its members sorted ascending.
std::vector<std::vector<int>> strongly_connected_components(const std::vector<std::vector<int>>& adj);

/// Component index per node, matching the order of strongly_connected_components.
std::vector<int> component_ids(const std::vector<std::vector<int>>& components, int node_count);

}  // namespace dlflow
