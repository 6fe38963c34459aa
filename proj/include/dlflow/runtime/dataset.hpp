#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dlflow/value.hpp"

namespace dlflow::runtime {

/// Append-only tuple sequence. Once its in-memory part passes the byte
/// budget it is written to a temporary file (under $DLFLOW_SPILL_DIR when
/// set) and memory starts over; reads replay the file, then memory.
class SpillableRun {
public:
    static constexpr std::size_t default_budget = std::size_t{256} << 20;

    explicit SpillableRun(std::size_t budget_bytes = default_budget) : budget_(budget_bytes) {}
    SpillableRun(const SpillableRun&) = delete;
    SpillableRun& operator=(const SpillableRun&) = delete;
    SpillableRun(SpillableRun&& o) noexcept;
    SpillableRun& operator=(SpillableRun&& o) noexcept;
    ~SpillableRun();

    void append(Tuple t);
    std::size_t size() const { return count_; }
    bool empty() const { return count_ == 0; }
    /// Encoded size of every tuple appended.
    std::size_t bytes() const { return bytes_; }
    bool spilled() const { return !path_.empty(); }

    template <typename F>
    void for_each(F&& f) const {
        if (spilled()) replay([&](const Tuple& t) { f(t); });
        for (const auto& t : mem_) f(t);
    }
    std::vector<Tuple> to_vector() const;

private:
    void spill();
    void replay(const std::function<void(const Tuple&)>& f) const;

    std::vector<Tuple> mem_;
    std::size_t mem_bytes_ = 0;
    std::size_t budget_;
    std::size_t count_ = 0;
    std::size_t bytes_ = 0;
    std::string path_;
};

using RunPtr = std::shared_ptr<const SpillableRun>;

RunPtr make_run(std::vector<Tuple> tuples, std::size_t budget = SpillableRun::default_budget);

/// An input dataset split into partitions, with the layout it claims.
struct PartitionedDataset {
    std::vector<std::vector<Tuple>> partitions;
    /// Columns hashed to pick the partition; empty when not hash partitioned.
    std::vector<int> hash_positions;
    /// Per-partition sort columns; empty when unordered.
    std::vector<int> sorted_positions;

    std::size_t size() const;
    std::vector<Tuple> flatten() const;
    /// Same tuples over `n` partitions: kept as is when the count matches,
    /// otherwise dealt round robin in flattened order.
    std::vector<std::vector<Tuple>> split(int n) const;
    /// Throws PropertyViolation when the claimed layout does not hold.
    void check() const;

    static PartitionedDataset hash_partitioned(std::vector<Tuple> tuples, std::vector<int> key_positions,
                                               int partitions);
    static PartitionedDataset round_robin(std::vector<Tuple> tuples, int partitions);
};

using Catalog = std::map<std::string, PartitionedDataset>;

/// Partition of `t` under hash partitioning on `positions` into `n` parts.
int partition_of(const Tuple& t, const std::vector<int>& positions, int n);

}  // namespace dlflow::runtime
