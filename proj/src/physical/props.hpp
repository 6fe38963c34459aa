#pragma once

#include <map>
#include <string>
#include <vector>

#include "dlflow/physical/plan.hpp"

namespace dlflow::physical::detail {

/// What is known about a stream: partition count, the hash columns it is
/// partitioned by (empty when unknown) and the per-partition sort order.
struct Props {
    int partitions = 1;
    std::vector<std::string> hash_keys;
    std::vector<std::string> sorted_by;
};

/// The same facts stated as positions in a stored tuple.
struct StoredProps {
    int partitions = 1;
    std::vector<int> hash_positions;
    std::vector<int> sorted_positions;
    bool hash_known = false;
};

/// True when every tuple with equal `keys` lands in the same partition.
bool clustered_by(const Props& p, const std::vector<std::string>& keys);
/// True when partitions are sorted by `keys` (in any key order) first.
bool sorted_on(const Props& p, const std::vector<std::string>& keys);
/// True when partitioned exactly as m_to_n_hash(keys) into `partitions`.
bool hashed_as(const Props& p, const std::vector<std::string>& keys, int partitions);

/// Renames through a projection; facts about dropped columns are lost.
Props map_through(const Props& p, const std::vector<logical::ProjectionItem>& items);
/// Stream properties at the receiving side of a connector.
Props across(const Props& sender, const Connector& c, int receivers);

StoredProps to_stored(const Props& p, const std::vector<std::string>& schema);
Props from_stored(const StoredProps& s, const std::vector<std::string>& schema);
/// Facts that hold for both writers of a dataset.
StoredProps meet(const StoredProps& a, const StoredProps& b);
bool operator==(const StoredProps& a, const StoredProps& b);

using StoreMap = std::map<std::string, StoredProps>;

/// Output properties of every operator of a dataflow; reads take theirs
/// from `stored` when the partition counts agree.
std::vector<Props> derive(const Dataflow& df, const StoreMap& stored);
/// How the dataflow's dataset writes leave their datasets, met across writers.
StoreMap written(const Dataflow& df, const std::vector<Props>& props);
/// Stored layout of every written dataset: init writers met with step
/// writers, iterated until step reads and step writes agree.
StoreMap plan_store(const PhysicalPlan& pp);
StoreMap merge_store(const StoreMap& base, const StoreMap& more);

}  // namespace dlflow::physical::detail
