#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlflow/runtime/dataset.hpp"
#include "dlflow/tasks/bgd.hpp"
#include "dlflow/tasks/pagerank.hpp"

namespace dlflow::cli {

/// Malformed input file; the message names the file and line.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Adjacency text: `src dst1 dst2 ...` per line, blank lines ignored. Every
/// id below the largest one seen is a vertex; ids without a line of their
/// own have no out-edges.
tasks::Graph read_graph(const std::string& path);
/// (Id, destinations) tuples hash partitioned on Id.
runtime::PartitionedDataset ingest_graph(const std::string& path, int partitions);

/// Sparse points: `label idx:val idx:val ...` per line with label +1 or -1
/// and ascending indices. `dim` receives one past the largest index.
std::vector<tasks::SparsePoint> read_points(const std::string& path, std::size_t* dim = nullptr);
/// (Id, record) tuples dealt round robin.
runtime::PartitionedDataset ingest_points(const std::string& path, int partitions);

}  // namespace dlflow::cli
