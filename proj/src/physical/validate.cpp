#include <algorithm>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "dlflow/physical/plan.hpp"
#include "props.hpp"

namespace dlflow::physical {

namespace {

using detail::Props;

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

class Checker {
public:
    Checker(const PhysicalPlan& pp, PlanReport& report) : pp_(pp), report_(report) {}

    void flow(const Dataflow& df, const char* where, const detail::StoreMap& store) {
        where_ = where;
        if (!structure(df)) return;
        std::vector<Props> props;
        try {
            props = detail::derive(df, store);
        } catch (const std::logic_error& e) {
            add("connectivity", e.what());
            return;
        }
        for (const auto& o : df.ops) check_op(df, o, props);
    }

private:
    void add(const std::string& kind, const std::string& msg) {
        report_.violations.push_back({kind, fmt::format("{}: {}", where_, msg)});
    }

    // Ids, connectors and input counts; false when props cannot be derived.
    bool structure(const Dataflow& df) {
        bool ok = true;
        const int n = static_cast<int>(df.ops.size());
        for (int i = 0; i < n; ++i) {
            const auto& o = df.op(i);
            if (o.id != i) {
                add("connectivity", fmt::format("operator at {} carries id {}", i, o.id));
                ok = false;
            }
            int main = 0, side = 0;
            for (const auto& in : o.inputs) {
                if (in.op < 0 || in.op >= n) {
                    add("connectivity", fmt::format("{} reads missing operator {}", o.name(), in.op));
                    ok = false;
                    continue;
                }
                if (in.connector.kind == ConnectorKind::none)
                    add("connectivity", fmt::format("{} has no connector from {}", o.name(), df.op(in.op).name()));
                (in.side ? side : main) += 1;
            }
            for (int a : o.after)
                if (a < 0 || a >= n) {
                    add("connectivity", fmt::format("{} waits on missing operator {}", o.name(), a));
                    ok = false;
                }
            arity(o, main, side);
            if (!o.is_sink() && df.consumers(o.id).empty())
                add("connectivity", fmt::format("{} {} feeds nothing", o.name(), o.label()));
        }
        return ok;
    }

    void arity(const PhysicalOperator& o, int main, int side) {
        int lo = 1, hi = 1, side_max = 0;
        switch (o.kind) {
            case OpKind::file_scan:
            case OpKind::dataset_read: lo = hi = 0; break;
            case OpKind::projection_fn: lo = 0; break;
            case OpKind::function_call:
                lo = 0;
                side_max = 1;
                break;
            case OpKind::cross_product:
                side_max = 1;
                if (side != 1) add("arity", fmt::format("{} cross_product needs one side input", o.name()));
                break;
            case OpKind::hash_join: lo = hi = 2; break;
            default: break;
        }
        if (main < lo || main > hi || side > side_max)
            add("arity", fmt::format("{} {} has {} main and {} side inputs", o.name(), o.label(), main, side));
    }

    void need_columns(const PhysicalOperator& o, const std::vector<std::string>& cols,
                      const std::vector<std::string>& schema, const char* what) {
        for (const auto& c : cols)
            if (!contains(schema, c))
                add("schema", fmt::format("{} {} names unknown column {}", o.name(), what, c));
    }

    void check_op(const Dataflow& df, const PhysicalOperator& o, const std::vector<Props>& props) {
        const PhysInput* main = nullptr;
        std::vector<std::string> side_schema;
        for (const auto& in : o.inputs) {
            const auto& src = df.op(in.op);
            const Props& sp = props[static_cast<std::size_t>(in.op)];
            connector(o, src, in, sp);
            if (in.side)
                side_schema = src.schema;
            else if (!main)
                main = &in;
        }
        std::vector<std::string> raw = main ? df.op(main->op).schema : std::vector<std::string>{};
        for (const auto& it : o.input_map)
            if (it.kind != logical::ProjectionItem::Kind::constant) need_columns(o, {it.source}, raw, "input map");
        const std::vector<std::string> in_schema = o.input_schema(raw);
        Props in;
        in.partitions = o.partitions;
        if (main) {
            in = detail::across(props[static_cast<std::size_t>(main->op)], main->connector, o.partitions);
            if (!o.input_map.empty()) in = detail::map_through(in, o.input_map);
        }
        const int parts = pp_.config.partitions();
        auto expect_schema = [&](const std::vector<std::string>& want) {
            if (o.schema != want)
                add("schema", fmt::format("{} {} outputs ({}) but should output ({})", o.name(), o.label(),
                                          fmt::join(o.schema, ", "), fmt::join(want, ", ")));
        };
        switch (o.kind) {
            case OpKind::selection: {
                std::vector<std::string> cols;
                for (const auto* side : {&o.predicate.lhs, &o.predicate.rhs})
                    if (side->kind == logical::Operand::Kind::column) cols.push_back(side->column);
                need_columns(o, cols, in_schema, "predicate");
                expect_schema(in_schema);
                break;
            }
            case OpKind::projection_fn: {
                std::vector<std::string> want;
                for (const auto& it : o.items) {
                    if (it.kind != logical::ProjectionItem::Kind::constant)
                        need_columns(o, {it.source}, in_schema, "projection");
                    want.insert(want.end(), it.names.begin(), it.names.end());
                }
                expect_schema(want);
                break;
            }
            case OpKind::sort:
                need_columns(o, o.keys, in_schema, "sort key");
                expect_schema(in_schema);
                break;
            case OpKind::dataset_write: expect_schema(in_schema); break;
            case OpKind::function_call: {
                std::vector<std::string> base = o.side_first ? side_schema : in_schema;
                const auto& rest = o.side_first ? in_schema : side_schema;
                base.insert(base.end(), rest.begin(), rest.end());
                std::vector<std::string> cols;
                for (const auto& a : o.args)
                    if (a.kind == logical::Operand::Kind::column) cols.push_back(a.column);
                need_columns(o, cols, base, "argument");
                if (o.schema.size() < base.size() || !std::equal(base.begin(), base.end(), o.schema.begin()))
                    add("schema", fmt::format("{} does not extend its input columns", o.name()));
                break;
            }
            case OpKind::cross_product: {
                std::vector<std::string> want = o.side_first ? side_schema : in_schema;
                const auto& rest = o.side_first ? in_schema : side_schema;
                want.insert(want.end(), rest.begin(), rest.end());
                expect_schema(want);
                break;
            }
            case OpKind::hash_join: {
                if (o.inputs.size() == 2) {
                    const auto& l = df.op(o.inputs[0].op).schema;
                    const auto& r = df.op(o.inputs[1].op).schema;
                    need_columns(o, o.keys, l, "join key");
                    need_columns(o, o.keys, r, "join key");
                    for (const auto& in2 : o.inputs) {
                        Props p = detail::across(props[static_cast<std::size_t>(in2.op)], in2.connector, o.partitions);
                        if (!detail::hashed_as(p, o.keys, o.partitions))
                            add("partitioning", fmt::format("{} input {} is not hashed on [{}]", o.name(),
                                                            df.op(in2.op).name(), fmt::join(o.keys, ", ")));
                    }
                }
                break;
            }
            case OpKind::btree_bulk_load:
            case OpKind::btree_index_join:
            case OpKind::btree_update: {
                need_columns(o, o.keys, in_schema, "btree key");
                if (!detail::hashed_as(in, o.keys, parts))
                    add("partitioning", fmt::format("{} {} input is not hashed on [{}] into {} partitions",
                                                    o.name(), o.label(), fmt::join(o.keys, ", "), parts));
                if (o.kind != OpKind::btree_update && !detail::sorted_on(in, o.keys))
                    add("sortedness", fmt::format("{} {} input is not sorted on [{}]", o.name(), o.label(),
                                                  fmt::join(o.keys, ", ")));
                if (o.kind == OpKind::btree_index_join) {
                    auto want = in_schema;
                    want.insert(want.end(), o.value_columns.begin(), o.value_columns.end());
                    expect_schema(want);
                    if (o.value_columns.size() != o.value_positions.size())
                        add("schema", fmt::format("{} value columns and positions differ in length", o.name()));
                } else {
                    expect_schema(in_schema);
                }
                if (!pp_.find_storage(o.dataset.name))
                    add("schema", fmt::format("{} uses {} without a storage decision", o.name(), o.dataset.name));
                break;
            }
            case OpKind::preclustered_group_by: {
                need_columns(o, o.keys, in_schema, "group key");
                need_columns(o, {o.aggregate_over}, in_schema, "aggregate column");
                if (!detail::sorted_on(in, o.keys))
                    add("sortedness", fmt::format("{} {} input is not sorted on [{}]", o.name(), o.label(),
                                                  fmt::join(o.keys, ", ")));
                const bool closes = o.phase == AggPhase::complete || o.phase == AggPhase::final;
                if (closes && !detail::clustered_by(in, o.keys))
                    add("partitioning", fmt::format("{} {} input is not partitioned by [{}]", o.name(), o.label(),
                                                    fmt::join(o.keys, ", ")));
                break;
            }
            case OpKind::group_all: {
                need_columns(o, {o.aggregate_over}, in_schema, "aggregate column");
                const bool closes = o.phase == AggPhase::complete || o.phase == AggPhase::final;
                if (closes && o.partitions != 1)
                    add("partitioning", fmt::format("{} {} must run in one partition", o.name(), o.label()));
                break;
            }
            case OpKind::file_scan:
            case OpKind::dataset_read: break;
        }
    }

    void connector(const PhysicalOperator& o, const PhysicalOperator& src, const PhysInput& in, const Props& sp) {
        const Connector& c = in.connector;
        const std::string edge = fmt::format("{}->{}", src.name(), o.name());
        if (in.side && c.kind != ConnectorKind::broadcast)
            add("connectivity", fmt::format("side input {} must be broadcast", edge));
        switch (c.kind) {
            case ConnectorKind::none: break;
            case ConnectorKind::one_to_one:
                if (src.partitions != o.partitions)
                    add("partitioning", fmt::format("one_to_one {} joins {} to {} partitions", edge, src.partitions,
                                                    o.partitions));
                break;
            case ConnectorKind::m_to_n_hash_merge:
                need_columns(o, c.sort_keys, src.schema, "merge key");
                if (!detail::sorted_on(sp, c.sort_keys))
                    add("sortedness", fmt::format("m_to_n_hash_merge {} needs senders sorted on [{}]", edge,
                                                  fmt::join(c.sort_keys, ", ")));
                [[fallthrough]];
            case ConnectorKind::m_to_n_hash:
                if (c.keys.empty()) add("schema", fmt::format("hash connector {} has no keys", edge));
                need_columns(o, c.keys, src.schema, "hash key");
                break;
            case ConnectorKind::aggregate_to_one:
                if (o.partitions != 1)
                    add("partitioning", fmt::format("aggregate_to_one {} ends in {} partitions", edge, o.partitions));
                break;
            case ConnectorKind::broadcast:
                if (!in.side) add("connectivity", fmt::format("broadcast {} must feed a side input", edge));
                break;
            case ConnectorKind::fan_in:
                if (o.partitions >= src.partitions)
                    add("partitioning", fmt::format("fan_in {} does not reduce {} partitions", edge, src.partitions));
                break;
        }
    }

    const PhysicalPlan& pp_;
    PlanReport& report_;
    const char* where_ = "";
};

}  // namespace

PlanReport validate_plan(const PhysicalPlan& pp) {
    PlanReport report;
    Checker c(pp, report);
    detail::StoreMap store;
    try {
        store = detail::plan_store(pp);
    } catch (const std::exception&) {
        // Structural problems are reported per dataflow below.
    }
    c.flow(pp.init, "init", store);
    c.flow(pp.step, "step", store);
    return report;
}

}  // namespace dlflow::physical
