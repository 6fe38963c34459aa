#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dlflow/physical/plan.hpp"
#include "dlflow/runtime/dataset.hpp"
#include "dlflow/runtime/worker_pool.hpp"

namespace dlflow::runtime {

/// The tuples of one partition: runs read back to back.
using Stream = std::vector<RunPtr>;

struct ConnectorMetrics {
    std::uint64_t tuples = 0;
    std::uint64_t bytes = 0;
};

struct ExchangeOptions {
    /// Tuples per batch handed from a sender to a receiver queue.
    std::size_t batch_size = 256;
    /// Batches a receiver queue holds before a sender must drain it.
    std::size_t queue_capacity = 64;
    std::size_t spill_budget = SpillableRun::default_budget;
};

/// Moves sender partitions to receiver partitions. Hash routing sends a tuple
/// to hash(keys) mod receivers; receivers see sender runs in sender order, or
/// a single k-way merge of them for m_to_n_hash_merge.
std::vector<Stream> exchange(const physical::Connector& c, const std::vector<std::string>& schema,
                             const std::vector<Stream>& senders, int receivers, WorkerPool& pool,
                             const ExchangeOptions& opts = {}, ConnectorMetrics* metrics = nullptr);

/// Convenience form over plain tuple vectors.
std::vector<std::vector<Tuple>> run_connector(const physical::Connector& c, const std::vector<std::string>& schema,
                                              const std::vector<std::vector<Tuple>>& senders, int receivers,
                                              ConnectorMetrics* metrics = nullptr);

std::vector<Tuple> collect(const Stream& s);
std::size_t stream_size(const Stream& s);

}  // namespace dlflow::runtime
