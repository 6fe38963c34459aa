#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlflow/value.hpp"

namespace dlflow::runtime {

class UnknownVertex : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Keyed vertex state: one sorted array per partition standing in for a
/// B-Tree. A key lives in partition hash(key) mod partitions for the whole
/// run. Updates are staged and applied together at the end of a step.
class VertexStore {
public:
    VertexStore(std::string name, int partitions, int key_position);

    const std::string& name() const { return name_; }
    int partitions() const { return static_cast<int>(parts_.size()); }
    int key_position() const { return key_; }
    int owner(const Value& key) const;

    /// Replaces partition `p` with `sorted`; throws PropertyViolation unless
    /// keys are strictly increasing and all owned by `p`.
    void bulk_load(int p, std::vector<Tuple> sorted);
    /// Queues an update for partition `p`. Tuples whose non-key values are all
    /// null leave the stored state as it is and are not queued.
    /// Safe to call concurrently for different partitions.
    void stage(int p, Tuple t);
    std::size_t staged() const;
    /// Applies staged updates in arrival order; throws UnknownVertex for an id
    /// that was never loaded.
    void apply_staged();
    void clear_staged();

    const std::vector<Tuple>& partition(int p) const { return parts_.at(static_cast<std::size_t>(p)); }
    const Tuple* find(const Value& key) const;
    std::size_t size() const;
    /// Every stored tuple, partition by partition.
    std::vector<Tuple> contents() const;

private:
    std::string name_;
    int key_;
    std::vector<std::vector<Tuple>> parts_;
    std::vector<std::vector<Tuple>> staged_;
};

}  // namespace dlflow::runtime
