#include <algorithm>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>

#include "dlflow/runtime/operators.hpp"
#include "kernel.hpp"

namespace dlflow::runtime {

using physical::AggPhase;
using physical::OpKind;

namespace detail {

std::vector<int> positions_in(const std::vector<std::string>& names, const std::vector<std::string>& schema,
                              const std::string& what) {
    std::vector<int> out;
    for (const auto& n : names) {
        auto it = std::find(schema.begin(), schema.end(), n);
        if (it == schema.end())
            throw std::logic_error(fmt::format("{}: column {} not in ({})", what, n, fmt::join(schema, ", ")));
        out.push_back(static_cast<int>(it - schema.begin()));
    }
    return out;
}

namespace {

int operand_pos(const logical::Operand& o, const std::vector<std::string>& schema, const std::string& what) {
    if (o.kind != logical::Operand::Kind::column) return -1;
    return positions_in({o.column}, schema, what).at(0);
}

bool less_on(const Tuple& a, const Tuple& b, const std::vector<int>& cols) {
    for (int c : cols) {
        const auto i = static_cast<std::size_t>(c);
        if (a[i] < b[i]) return true;
        if (b[i] < a[i]) return false;
    }
    return false;
}

bool same_on(const Tuple& a, const Tuple& b, const std::vector<int>& cols) {
    for (int c : cols)
        if (!(a[static_cast<std::size_t>(c)] == b[static_cast<std::size_t>(c)])) return false;
    return true;
}

Tuple concat(const Tuple& a, const Tuple& b) {
    Tuple out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

}  // namespace

Mapper::Mapper(const std::vector<logical::ProjectionItem>& items, const std::vector<std::string>& schema)
    : identity_(items.empty()) {
    for (const auto& it : items) {
        Item m;
        m.kind = it.kind;
        if (it.kind == logical::ProjectionItem::Kind::constant) {
            m.constant = it.constant.value;
        } else {
            m.source = positions_in({it.source}, schema, "projection").at(0);
            m.width = it.names.size();
        }
        items_.push_back(std::move(m));
    }
}

const ValueList& Mapper::elements(const Value& v) {
    static const ValueList none;
    if (v.is_null()) return none;
    return v.as_list();
}

void Mapper::spread(const Value& e, std::size_t width, Tuple& out) {
    if (width == 1) {
        out.push_back(e);
        return;
    }
    const ValueList& parts = e.as_list();
    if (parts.size() != width)
        throw std::runtime_error(fmt::format("unnest element {} does not have {} components", e.to_string(), width));
    out.insert(out.end(), parts.begin(), parts.end());
}

Kernel::Kernel(const physical::PhysicalOperator& op, const std::vector<std::string>& main_schema,
               const std::vector<std::string>& right_schema, const std::vector<std::string>& side_schema,
               const UdfRegistry& udfs, VertexStore* store, double tolerance)
    : op_(op), udfs_(udfs), store_(store), tol_(tolerance), map_(op.input_map, main_schema) {
    const std::string what = op.name() + " " + op.label();
    in_schema_ = op.input_schema(main_schema);
    auto resolve_out = [&] {
        out_pos_ = positions_in(op.schema, avail_, what);
        std::vector<int> iota(avail_.size());
        std::iota(iota.begin(), iota.end(), 0);
        out_identity_ = out_pos_ == iota;
    };
    auto with_side = [&] {
        avail_ = in_schema_;
        if (op.side_first) avail_.insert(avail_.begin(), side_schema.begin(), side_schema.end());
        else avail_.insert(avail_.end(), side_schema.begin(), side_schema.end());
    };
    auto need_store = [&] {
        if (!store_) throw std::logic_error(what + " has no btree to work on");
    };
    switch (op.kind) {
        case OpKind::file_scan:
        case OpKind::dataset_read: throw std::logic_error(what + " is a source and has no kernel");
        case OpKind::dataset_write: break;
        case OpKind::projection_fn: items_ = Mapper(op.items, in_schema_); break;
        case OpKind::selection:
            avail_ = in_schema_;
            lhs_pos_ = operand_pos(op.predicate.lhs, avail_, what);
            rhs_pos_ = operand_pos(op.predicate.rhs, avail_, what);
            break;
        case OpKind::sort: keys_ = positions_in(op.keys, in_schema_, what); break;
        case OpKind::function_call: {
            with_side();
            fn_ = &udfs.function(op.udf);
            for (const auto& a : op.args) arg_pos_.push_back(operand_pos(a, avail_, what));
            const std::size_t width = avail_.size();
            for (const auto& c : op.schema)
                if (std::find(avail_.begin(), avail_.begin() + static_cast<std::ptrdiff_t>(width), c) ==
                    avail_.begin() + static_cast<std::ptrdiff_t>(width))
                    avail_.push_back(c);
            fn_outputs_ = avail_.size() - width;
            resolve_out();
            break;
        }
        case OpKind::cross_product:
            with_side();
            resolve_out();
            break;
        case OpKind::hash_join:
            avail_ = concat_names(in_schema_, right_schema);
            keys_ = positions_in(op.keys, in_schema_, what);
            right_keys_ = positions_in(op.keys, right_schema, what);
            resolve_out();
            break;
        case OpKind::btree_index_join:
        case OpKind::btree_bulk_load:
        case OpKind::btree_update:
            need_store();
            keys_ = positions_in(op.keys, in_schema_, what);
            break;
        case OpKind::preclustered_group_by:
        case OpKind::group_all:
            agg_ = &udfs.aggregate(op.udf);
            keys_ = positions_in(op.keys, in_schema_, what);
            over_ = positions_in({op.aggregate_over}, in_schema_, what).at(0);
            for (const auto& c : op.schema)
                group_out_.push_back(c == op.aggregate_over ? -1 : positions_in({c}, in_schema_, what).at(0));
            break;
    }
}

std::vector<std::string> Kernel::concat_names(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::string> out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

template <typename F>
auto Kernel::guarded(const KernelIO& io, const std::string& what, F&& f) const -> decltype(f()) {
    try {
        return f();
    } catch (const UdfError&) {
        throw;
    } catch (const std::exception& e) {
        throw UdfError(fmt::format("{} {} at iteration {}, partition {}: {} failed: {}", op_.name(), op_.label(),
                                   io.iteration, io.partition, what, e.what()));
    }
}

void Kernel::violation(const KernelIO& io, const std::string& msg) const {
    throw PropertyViolation(fmt::format("{} {} at iteration {}, partition {}: {}", op_.name(), op_.label(),
                                        io.iteration, io.partition, msg));
}

Value Kernel::operand(const logical::Operand& o, int pos, const Tuple& t, std::int64_t j) const {
    switch (o.kind) {
        case logical::Operand::Kind::column: return t[static_cast<std::size_t>(pos)];
        case logical::Operand::Kind::constant: return o.constant.value;
        case logical::Operand::Kind::iteration: return Value(j);
    }
    return Value();
}

void Kernel::emit_projected(const Tuple& full, SpillableRun& out) const {
    if (out_identity_) {
        out.append(full);
        return;
    }
    Tuple t;
    t.reserve(out_pos_.size());
    for (int p : out_pos_) t.push_back(full[static_cast<std::size_t>(p)]);
    out.append(std::move(t));
}

void Kernel::call_function(const KernelIO& io, const Tuple& combined) const {
    Tuple args;
    args.reserve(op_.args.size());
    for (std::size_t i = 0; i < op_.args.size(); ++i)
        args.push_back(operand(op_.args[i], arg_pos_[i], combined, io.iteration));
    auto results = guarded(io, op_.udf, [&] { return (*fn_)(args); });
    ++(*io.calls)[op_.udf];
    for (auto& r : results) {
        if (r.size() != fn_outputs_)
            throw UdfError(fmt::format("{} {} at iteration {}: {} returned {} values, expected {}", op_.name(),
                                       op_.label(), io.iteration, op_.udf, r.size(), fn_outputs_));
        emit_projected(concat(combined, r), *io.out);
    }
}

void Kernel::run(const KernelIO& io) const {
    SpillableRun& out = *io.out;
    auto with_side = [&](const Tuple& t, auto&& f) {
        if (!io.side) {
            f(t);
            return;
        }
        for (const auto& s : *io.side) f(op_.side_first ? concat(s, t) : concat(t, s));
    };
    switch (op_.kind) {
        case OpKind::file_scan:
        case OpKind::dataset_read: throw std::logic_error("source operators have no kernel");
        case OpKind::dataset_write: for_each_input(io, [&](const Tuple& t) { out.append(t); }); return;
        case OpKind::projection_fn:
            for_each_input(io, [&](const Tuple& t) { items_.apply(t, [&](const Tuple& r) { out.append(r); }); });
            return;
        case OpKind::selection:
            for_each_input(io, [&](const Tuple& t) {
                const Value a = operand(op_.predicate.lhs, lhs_pos_, t, io.iteration);
                const Value b = operand(op_.predicate.rhs, rhs_pos_, t, io.iteration);
                if (guarded(io, "comparison", [&] { return compare_values(op_.predicate.op, a, b, udfs_, tol_); }))
                    out.append(t);
            });
            return;
        case OpKind::sort: run_sort(io); return;
        case OpKind::function_call:
            if (op_.inputs.empty()) {
                if (io.partition == 0) call_function(io, Tuple{});
                return;
            }
            for_each_input(io, [&](const Tuple& t) { with_side(t, [&](const Tuple& c) { call_function(io, c); }); });
            return;
        case OpKind::cross_product:
            for_each_input(io, [&](const Tuple& t) { with_side(t, [&](const Tuple& c) { emit_projected(c, out); }); });
            return;
        case OpKind::hash_join: run_hash_join(io); return;
        case OpKind::btree_index_join: run_index_join(io); return;
        case OpKind::btree_bulk_load: {
            std::vector<Tuple> rows;
            for_each_input(io, [&](const Tuple& t) { rows.push_back(t); });
            try {
                store_->bulk_load(io.partition, std::move(rows));
            } catch (const PropertyViolation& e) {
                violation(io, e.what());
            }
            return;
        }
        case OpKind::btree_update:
            for_each_input(io, [&](const Tuple& t) {
                try {
                    store_->stage(io.partition, t);
                } catch (const PropertyViolation& e) {
                    violation(io, e.what());
                }
            });
            return;
        case OpKind::preclustered_group_by:
        case OpKind::group_all: run_group(io); return;
    }
}

void Kernel::run_sort(const KernelIO& io) const {
    std::vector<Tuple> rows;
    for_each_input(io, [&](const Tuple& t) { rows.push_back(t); });
    std::stable_sort(rows.begin(), rows.end(), [&](const Tuple& a, const Tuple& b) { return less_on(a, b, keys_); });
    for (auto& t : rows) io.out->append(std::move(t));
}

void Kernel::run_group(const KernelIO& io) const {
    const bool lift = op_.phase == AggPhase::complete || op_.phase == AggPhase::partial;
    const bool finalize = op_.phase == AggPhase::complete || op_.phase == AggPhase::final;
    const bool all = op_.kind == OpKind::group_all;
    const auto over = static_cast<std::size_t>(over_);
    bool have = false;
    Tuple first;
    Value state;
    auto flush = [&] {
        Value v = finalize ? guarded(io, op_.udf + " finalize", [&] { return agg_->finalize(state); }) : state;
        Tuple o;
        o.reserve(group_out_.size());
        for (int c : group_out_) o.push_back(c < 0 ? v : first[static_cast<std::size_t>(c)]);
        io.out->append(std::move(o));
    };
    for_each_input(io, [&](const Tuple& t) {
        Value x = lift ? guarded(io, op_.udf + " lift", [&] { return agg_->lift(t[over]); }) : t[over];
        if (!have) {
            first = t;
            state = std::move(x);
            have = true;
            return;
        }
        if (all || same_on(first, t, keys_)) {
            state = guarded(io, op_.udf + " merge", [&] { return agg_->merge(state, x); });
            return;
        }
        if (less_on(t, first, keys_)) violation(io, "input is not sorted on the group keys");
        flush();
        first = t;
        state = std::move(x);
    });
    if (have) flush();
}

void Kernel::run_hash_join(const KernelIO& io) const {
    std::unordered_map<Tuple, std::vector<Tuple>, TupleHash> build;
    auto key_of = [](const Tuple& t, const std::vector<int>& cols) {
        Tuple k;
        for (int c : cols) k.push_back(t[static_cast<std::size_t>(c)]);
        return k;
    };
    if (io.right)
        for (const auto& r : *io.right) r->for_each([&](const Tuple& t) { build[key_of(t, right_keys_)].push_back(t); });
    for_each_input(io, [&](const Tuple& t) {
        auto it = build.find(key_of(t, keys_));
        if (it == build.end()) return;
        for (const auto& r : it->second) emit_projected(concat(t, r), *io.out);
    });
}

void Kernel::run_index_join(const KernelIO& io) const {
    const auto& part = store_->partition(io.partition);
    const auto kp = static_cast<std::size_t>(store_->key_position());
    const auto probe = static_cast<std::size_t>(keys_.at(0));
    std::size_t i = 0;
    Value prev;
    bool first = true;
    for_each_input(io, [&](const Tuple& t) {
        const Value& k = t[probe];
        if (!first && k < prev) violation(io, "probe input is not sorted on the index key");
        prev = k;
        first = false;
        while (i < part.size() && part[i][kp] < k) ++i;
        if (i == part.size() || !(part[i][kp] == k)) return;
        Tuple o = t;
        for (int vp : op_.value_positions) o.push_back(part[i][static_cast<std::size_t>(vp)]);
        io.out->append(std::move(o));
    });
}

}  // namespace detail

bool compare_values(const std::string& op, const Value& a, const Value& b, const UdfRegistry& udfs, double tolerance) {
    if (op == "=" || op == "==") return udfs.values_equal(a, b, tolerance);
    if (op == "!=") return !udfs.values_equal(a, b, tolerance);
    std::partial_ordering c = std::partial_ordering::equivalent;
    const bool numeric = (a.is_int() || a.is_real()) && (b.is_int() || b.is_real());
    if (numeric && !(a.is_int() && b.is_int())) c = a.as_number() <=> b.as_number();
    else c = a <=> b;
    if (op == "<") return c < 0;
    if (op == "<=") return c <= 0;
    if (op == ">") return c > 0;
    if (op == ">=") return c >= 0;
    throw std::invalid_argument("unknown comparison " + op);
}

std::vector<std::vector<Tuple>> run_operator(const physical::PhysicalOperator& op, const OperatorInputs& in,
                                             const UdfRegistry& udfs, const OperatorContext& ctx) {
    if (op.kind == OpKind::file_scan || op.kind == OpKind::dataset_read)
        throw std::invalid_argument("run_operator does not run source operators");
    detail::Kernel k(op, in.schema, in.right_schema, in.side_schema, udfs, ctx.store, ctx.float_tolerance);
    const std::size_t n = std::max<std::size_t>(in.partitions.size(), 1);
    std::vector<std::vector<Tuple>> out(n);
    detail::UdfCalls calls;
    const bool has_side = std::any_of(op.inputs.begin(), op.inputs.end(), [](const auto& i) { return i.side; });
    for (std::size_t p = 0; p < n; ++p) {
        Stream main, right;
        if (p < in.partitions.size()) main.push_back(make_run(in.partitions[p]));
        if (p < in.right.size()) right.push_back(make_run(in.right[p]));
        SpillableRun run;
        detail::KernelIO io;
        io.main = op.inputs.empty() ? nullptr : &main;
        io.right = &right;
        io.side = has_side ? &in.side : nullptr;
        io.partition = static_cast<int>(p);
        io.iteration = ctx.iteration;
        io.calls = &calls;
        io.out = &run;
        k.run(io);
        out[p] = run.to_vector();
    }
    return out;
}

}  // namespace dlflow::runtime
