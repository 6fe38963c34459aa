#pragma once

#include <string>
#include <vector>

#include "dlflow/logical/plan.hpp"

namespace dlflow::physical {

enum class ConnectorChoice { hash_merge, hash_then_sort };
enum class AggTree { flat, sqrt_layer, fanin };

struct ClusterConfig {
    int workers = 1;
    int partitions_per_worker = 1;
    ConnectorChoice connector_choice = ConnectorChoice::hash_merge;
    AggTree agg_tree = AggTree::sqrt_layer;
    /// Fan-in of each aggregation layer when agg_tree is fanin.
    int fanin = 4;
    bool combiner_enabled = true;

    int partitions() const { return workers * partitions_per_worker; }
    /// Throws std::invalid_argument on workers < 1, partitions_per_worker < 1
    /// or a fan-in below 2.
    void check() const;
    std::string to_string() const;
};

/// Parses "flat", "sqrt" and "fanin:k".
void parse_agg_tree(const std::string& text, ClusterConfig& cfg);

enum class OpKind {
    file_scan,
    dataset_read,
    dataset_write,
    projection_fn,
    selection,
    sort,
    function_call,
    cross_product,
    hash_join,
    btree_bulk_load,
    btree_update,
    btree_index_join,
    preclustered_group_by,
    group_all,
};

const char* op_kind_name(OpKind k);

/// Aggregation phase: complete = lift, merge, finalize; partial = lift and
/// merge into states; intermediate = merge states; final = merge and finalize.
enum class AggPhase { complete, partial, intermediate, final };

const char* agg_phase_name(AggPhase p);

enum class ConnectorKind {
    none,
    one_to_one,
    m_to_n_hash,
    m_to_n_hash_merge,
    aggregate_to_one,
    /// Every receiver partition gets every tuple (side inputs).
    broadcast,
    /// Sender i goes to receiver i * receivers / senders (aggregation layers).
    fan_in,
};

const char* connector_kind_name(ConnectorKind k);

enum class Materialization { pipelined, blocking };

struct Connector {
    ConnectorKind kind = ConnectorKind::none;
    std::vector<std::string> keys;
    std::vector<std::string> sort_keys;
    Materialization materialization = Materialization::pipelined;

    std::string to_string() const;
};

struct PhysInput {
    int op = -1;
    Connector connector;
    /// Side inputs are materialized in full before the operator runs.
    bool side = false;
};

struct PhysicalOperator {
    int id = -1;
    OpKind kind = OpKind::file_scan;
    int partitions = 1;
    std::vector<PhysInput> inputs;
    /// Applied to each main-input tuple before the operator sees it.
    std::vector<logical::ProjectionItem> input_map;
    std::vector<std::string> schema;
    std::string rule;

    logical::DatasetRef dataset;        // file_scan, dataset_read/write; btree name in dataset.name
    std::vector<std::string> keys;      // sort, group keys, join keys, btree key
    std::string udf;                    // function_call, group-bys
    std::vector<logical::Operand> args; // function_call
    std::string aggregate_over;         // group-bys
    AggPhase phase = AggPhase::complete;
    std::vector<logical::ProjectionItem> items;  // projection_fn
    logical::Comparison predicate;               // selection
    /// btree_index_join: stored value columns as named in the output, and
    /// their positions in the stored tuple.
    std::vector<std::string> value_columns;
    std::vector<int> value_positions;
    /// cross_product / function_call with a side input: side columns first.
    bool side_first = false;
    /// dataset_read: writes in the same dataflow that must finish first.
    std::vector<int> after;

    bool is_sink() const {
        return kind == OpKind::dataset_write || kind == OpKind::btree_bulk_load || kind == OpKind::btree_update;
    }
    bool is_blocking() const { return kind == OpKind::sort || kind == OpKind::btree_bulk_load; }
    /// Columns entering the operator logic (input_map applied).
    std::vector<std::string> input_schema(const std::vector<std::string>& main_schema) const;
    std::string label() const;
    std::string name() const { return "O" + std::to_string(id + 1); }
};

struct Dataflow {
    std::vector<PhysicalOperator> ops;

    const PhysicalOperator& op(int id) const { return ops.at(static_cast<std::size_t>(id)); }
    PhysicalOperator& op(int id) { return ops.at(static_cast<std::size_t>(id)); }
    std::vector<int> consumers(int id) const;
    /// Operator ids with every input before its consumer.
    std::vector<int> topological_order() const;
};

struct StorageDecl {
    enum class Kind { btree, grouped };
    Kind kind = Kind::btree;
    std::string dataset;
    /// Key columns as positions in the stored tuple, with the names used by
    /// step readers for display.
    std::vector<int> key_positions;
    std::vector<std::string> key_names;
    std::string aggregate;  // grouped
    int value_position = -1;

    std::string to_string() const;
};

struct AppliedRule {
    std::string name;
    std::string detail;
};

struct PhysicalPlan {
    ClusterConfig config;
    Dataflow init;
    Dataflow step;
    logical::Halt halt;
    std::vector<std::string> recursive_datasets;
    std::vector<StorageDecl> storage;
    std::vector<AppliedRule> rules;
    /// Step connectors whose traffic is counted, labelled "O7->O8".
    std::vector<std::string> metrics_taps;

    const StorageDecl* find_storage(const std::string& dataset) const;
};

/// Worker owning partition `p` of an operator with `partitions` partitions.
inline int worker_of(int p, int partitions, int workers) { return p * workers / partitions; }

/// Labels of the non-one_to_one connectors of a dataflow.
std::vector<std::string> metrics_taps(const Dataflow& df);

/// Lowers the logical plan, applying the rewrite rules in a fixed order:
/// storage_selection, shared_scan, early_grouping, join_selection,
/// order_property, aggregation_tree, connector_selection.
/// `commutative` names the aggregates that may be split into partial and final
/// phases; builtins max, min, sum and count always may.
PhysicalPlan optimize(const logical::LogicalPlan& lp, const ClusterConfig& cfg,
                      const std::vector<std::string>& commutative = {});
/// Takes the commutative aggregates from the program's declarations.
PhysicalPlan optimize(const logical::LogicalPlan& lp, const ClusterConfig& cfg, const datalog::Program& p);

struct PlanReport {
    struct Violation {
        std::string kind;  // connectivity, sortedness, partitioning, schema, arity
        std::string message;
    };
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
    bool has(const std::string& kind) const;
    std::string to_string() const;
};

/// Static check of operator and connector requirements.
PlanReport validate_plan(const PhysicalPlan& pp);

/// Init and step dataflows with halt condition; operators numbered On.
std::string format_dataflows(const PhysicalPlan& pp);
/// Configuration, storage decisions, applied rules, then the dataflows.
std::string format_plan(const PhysicalPlan& pp);

}  // namespace dlflow::physical
