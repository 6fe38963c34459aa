#include <algorithm>
#include <functional>
#include <stdexcept>

#include <fmt/format.h>

#include "dlflow/physical/plan.hpp"

namespace dlflow::physical {

void ClusterConfig::check() const {
    if (workers < 1) throw std::invalid_argument("workers must be at least 1");
    if (partitions_per_worker < 1) throw std::invalid_argument("partitions per worker must be at least 1");
    if (agg_tree == AggTree::fanin && fanin < 2) throw std::invalid_argument("fan-in must be at least 2");
}

std::string ClusterConfig::to_string() const {
    std::string tree = agg_tree == AggTree::flat ? "flat"
                       : agg_tree == AggTree::sqrt_layer ? "sqrt"
                                                         : fmt::format("fanin:{}", fanin);
    return fmt::format("workers={} partitions_per_worker={} connector={} agg_tree={} combiner={}", workers,
                       partitions_per_worker,
                       connector_choice == ConnectorChoice::hash_merge ? "hash_merge" : "hash_then_sort", tree,
                       combiner_enabled ? "on" : "off");
}

void parse_agg_tree(const std::string& text, ClusterConfig& cfg) {
    if (text == "flat") {
        cfg.agg_tree = AggTree::flat;
    } else if (text == "sqrt") {
        cfg.agg_tree = AggTree::sqrt_layer;
    } else if (text.rfind("fanin:", 0) == 0) {
        std::size_t used = 0;
        int k = 0;
        try {
            k = std::stoi(text.substr(6), &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != text.size() - 6 || k < 2)
            throw std::invalid_argument("bad aggregation tree '" + text + "': fan-in must be an integer >= 2");
        cfg.agg_tree = AggTree::fanin;
        cfg.fanin = k;
    } else {
        throw std::invalid_argument("bad aggregation tree '" + text + "': expected flat, sqrt or fanin:k");
    }
}

const char* op_kind_name(OpKind k) {
    switch (k) {
        case OpKind::file_scan: return "file_scan";
        case OpKind::dataset_read: return "dataset_read";
        case OpKind::dataset_write: return "dataset_write";
        case OpKind::projection_fn: return "projection_fn";
        case OpKind::selection: return "selection";
        case OpKind::sort: return "sort";
        case OpKind::function_call: return "function_call";
        case OpKind::cross_product: return "cross_product";
        case OpKind::hash_join: return "hash_join";
        case OpKind::btree_bulk_load: return "btree_bulk_load";
        case OpKind::btree_update: return "btree_update";
        case OpKind::btree_index_join: return "btree_index_join";
        case OpKind::preclustered_group_by: return "preclustered_group_by";
        case OpKind::group_all: return "group_all";
    }
    return "?";
}

const char* agg_phase_name(AggPhase p) {
    switch (p) {
        case AggPhase::complete: return "complete";
        case AggPhase::partial: return "partial";
        case AggPhase::intermediate: return "intermediate";
        case AggPhase::final: return "final";
    }
    return "?";
}

const char* connector_kind_name(ConnectorKind k) {
    switch (k) {
        case ConnectorKind::none: return "none";
        case ConnectorKind::one_to_one: return "one_to_one";
        case ConnectorKind::m_to_n_hash: return "m_to_n_hash";
        case ConnectorKind::m_to_n_hash_merge: return "m_to_n_hash_merge";
        case ConnectorKind::aggregate_to_one: return "aggregate_to_one";
        case ConnectorKind::broadcast: return "broadcast";
        case ConnectorKind::fan_in: return "fan_in";
    }
    return "?";
}

std::string Connector::to_string() const {
    switch (kind) {
        case ConnectorKind::m_to_n_hash: return fmt::format("m_to_n_hash([{}])", fmt::join(keys, ", "));
        case ConnectorKind::m_to_n_hash_merge:
            return fmt::format("m_to_n_hash_merge([{}], [{}])", fmt::join(keys, ", "), fmt::join(sort_keys, ", "));
        default: return connector_kind_name(kind);
    }
}

std::vector<std::string> PhysicalOperator::input_schema(const std::vector<std::string>& main_schema) const {
    if (input_map.empty()) return main_schema;
    std::vector<std::string> out;
    for (const auto& it : input_map) out.insert(out.end(), it.names.begin(), it.names.end());
    return out;
}

namespace {

std::string join_items(const std::vector<logical::ProjectionItem>& items) {
    std::vector<std::string> parts;
    for (const auto& it : items) parts.push_back(it.to_string());
    return fmt::format("{}", fmt::join(parts, ", "));
}

}  // namespace

std::string PhysicalOperator::label() const {
    const std::string k = op_kind_name(kind);
    switch (kind) {
        case OpKind::file_scan:
        case OpKind::dataset_read:
        case OpKind::dataset_write: return fmt::format("{}({})", k, dataset.to_string());
        case OpKind::projection_fn: return fmt::format("{}({})", k, join_items(items));
        case OpKind::selection: return fmt::format("{}({})", k, predicate.to_string());
        case OpKind::sort:
        case OpKind::hash_join: return fmt::format("{}([{}])", k, fmt::join(keys, ", "));
        case OpKind::function_call: {
            std::vector<std::string> parts;
            for (const auto& a : args) parts.push_back(a.to_string());
            return fmt::format("{}({}({}))", k, udf, fmt::join(parts, ", "));
        }
        case OpKind::cross_product: return k;
        case OpKind::btree_bulk_load:
        case OpKind::btree_update:
        case OpKind::btree_index_join:
            return fmt::format("{}({}, [{}])", k, dataset.name, fmt::join(keys, ", "));
        case OpKind::preclustered_group_by:
            return fmt::format("{}([{}], {}<{}>, {})", k, fmt::join(keys, ", "), udf, aggregate_over,
                               agg_phase_name(phase));
        case OpKind::group_all: return fmt::format("{}({}<{}>, {})", k, udf, aggregate_over, agg_phase_name(phase));
    }
    return k;
}

std::vector<int> Dataflow::consumers(int id) const {
    std::vector<int> out;
    for (const auto& o : ops)
        for (const auto& in : o.inputs)
            if (in.op == id) {
                out.push_back(o.id);
                break;
            }
    return out;
}

std::vector<int> Dataflow::topological_order() const {
    const std::size_t n = ops.size();
    std::vector<int> state(n, 0), order;
    std::function<void(int)> visit = [&](int id) {
        auto& s = state.at(static_cast<std::size_t>(id));
        if (s == 2) return;
        if (s == 1) throw std::logic_error("physical dataflow has a cycle at " + op(id).name());
        s = 1;
        for (const auto& in : op(id).inputs) visit(in.op);
        for (int a : op(id).after) visit(a);
        s = 2;
        order.push_back(id);
    };
    for (std::size_t i = 0; i < n; ++i) visit(static_cast<int>(i));
    return order;
}

std::vector<std::string> metrics_taps(const Dataflow& df) {
    std::vector<std::string> out;
    for (const auto& o : df.ops)
        for (const auto& in : o.inputs)
            if (in.connector.kind != ConnectorKind::one_to_one)
                out.push_back(df.op(in.op).name() + "->" + o.name());
    return out;
}

std::string StorageDecl::to_string() const {
    if (kind == Kind::btree)
        return fmt::format("{}: btree on [{}] (positions [{}])", dataset, fmt::join(key_names, ", "),
                           fmt::join(key_positions, ", "));
    return fmt::format("{}: grouped on [{}] by {} over position {}", dataset, fmt::join(key_names, ", "), aggregate,
                       value_position);
}

const StorageDecl* PhysicalPlan::find_storage(const std::string& dataset) const {
    for (const auto& s : storage)
        if (s.dataset == dataset) return &s;
    return nullptr;
}

bool PlanReport::has(const std::string& kind) const {
    return std::any_of(violations.begin(), violations.end(), [&](const Violation& v) { return v.kind == kind; });
}

std::string PlanReport::to_string() const {
    std::string out;
    for (const auto& v : violations) out += fmt::format("{}: {}\n", v.kind, v.message);
    return out;
}

namespace {

void format_flow(const Dataflow& df, std::string& out) {
    for (const auto& o : df.ops) {
        out += o.name() + " " + o.label();
        if (!o.input_map.empty()) out += " map(" + join_items(o.input_map) + ")";
        out += fmt::format(" p={}", o.partitions);
        std::vector<std::string> ins;
        for (const auto& in : o.inputs)
            if (!in.side) ins.push_back(df.op(in.op).name() + " " + in.connector.to_string());
        for (const auto& in : o.inputs)
            if (in.side) ins.push_back("side " + df.op(in.op).name() + " " + in.connector.to_string());
        if (!ins.empty()) out += fmt::format(" <- {}", fmt::join(ins, ", "));
        if (!o.after.empty()) {
            std::vector<std::string> names;
            for (int a : o.after) names.push_back(df.op(a).name());
            out += fmt::format(" after {}", fmt::join(names, ", "));
        }
        out += fmt::format(" : ({}) {{{}}}\n", fmt::join(o.schema, ", "), o.rule);
    }
}

}  // namespace

std::string format_dataflows(const PhysicalPlan& pp) {
    std::string out = "init:\n";
    format_flow(pp.init, out);
    out += "step:\n";
    format_flow(pp.step, out);
    out += fmt::format("recursive: {}\n", fmt::join(pp.recursive_datasets, ", "));
    out += "halt: " + pp.halt.to_string() + "\n";
    return out;
}

std::string format_plan(const PhysicalPlan& pp) {
    std::string out = "config: " + pp.config.to_string() + "\n";
    out += "storage:\n";
    for (const auto& s : pp.storage) out += "  " + s.to_string() + "\n";
    out += "rules:\n";
    for (const auto& r : pp.rules) out += fmt::format("  {}: {}\n", r.name, r.detail);
    out += fmt::format("metrics taps: {}\n", fmt::join(pp.metrics_taps, ", "));
    return out + format_dataflows(pp);
}

}  // namespace dlflow::physical
