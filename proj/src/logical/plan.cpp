#include <algorithm>
#include <functional>
#include <set>

#include <fmt/format.h>

#include "dlflow/datalog/printer.hpp"
#include "dlflow/logical/plan.hpp"

namespace dlflow::logical {

const char* op_kind_name(OpKind k) {
    switch (k) {
        case OpKind::dataset: return "dataset";
        case OpKind::cross_product: return "cross_product";
        case OpKind::inner_join: return "inner_join";
        case OpKind::projection: return "projection";
        case OpKind::selection: return "selection";
        case OpKind::group_by: return "group_by";
        case OpKind::group_all: return "group_all";
        case OpKind::function_apply: return "function_apply";
    }
    return "?";
}

std::string DatasetRef::to_string() const {
    switch (version) {
        case Version::none: return name;
        case Version::constant: return fmt::format("{}@{}", name, state);
        case Version::current: return name + "@J";
        case Version::next: return name + "@J+1";
        case Version::history: return name + "@*";
    }
    return name;
}

Operand Operand::of_column(std::string c) {
    Operand o;
    o.column = std::move(c);
    return o;
}

Operand Operand::of_constant(datalog::Term t) {
    Operand o;
    o.kind = Kind::constant;
    o.constant = std::move(t);
    return o;
}

Operand Operand::iteration(std::string spelling) {
    Operand o;
    o.kind = Kind::iteration;
    o.column = std::move(spelling);
    return o;
}

std::string Operand::to_string() const { return kind == Kind::constant ? datalog::print_term(constant) : column; }

std::string Comparison::to_string() const { return fmt::format("{} {} {}", lhs.to_string(), op, rhs.to_string()); }

ProjectionItem ProjectionItem::of_column(std::string name, std::string source) {
    ProjectionItem it;
    it.names = {std::move(name)};
    it.source = std::move(source);
    return it;
}

ProjectionItem ProjectionItem::of_constant(std::string name, datalog::Term value) {
    ProjectionItem it;
    it.kind = Kind::constant;
    it.names = {std::move(name)};
    it.constant = std::move(value);
    return it;
}

ProjectionItem ProjectionItem::of_unnest(std::string source, std::vector<std::string> names) {
    ProjectionItem it;
    it.kind = Kind::unnest;
    it.names = std::move(names);
    it.source = std::move(source);
    return it;
}

std::string ProjectionItem::to_string() const {
    switch (kind) {
        case Kind::column: return names[0] == source ? source : names[0] + "=" + source;
        case Kind::constant: return names[0] + "=" + datalog::print_term(constant);
        case Kind::unnest: return fmt::format("unnest({})->({})", source, fmt::join(names, ", "));
    }
    return "?";
}

std::string LogicalOperator::label() const {
    switch (kind) {
        case OpKind::dataset: return fmt::format("dataset({})", dataset.to_string());
        case OpKind::cross_product: return "cross_product";
        case OpKind::inner_join: return fmt::format("inner_join([{}])", fmt::join(keys, ", "));
        case OpKind::projection: {
            std::vector<std::string> parts;
            for (const auto& it : items) parts.push_back(it.to_string());
            return fmt::format("projection({})", fmt::join(parts, ", "));
        }
        case OpKind::selection: return fmt::format("selection({})", predicate.to_string());
        case OpKind::group_by:
            return fmt::format("group_by([{}], {}<{}>)", fmt::join(keys, ", "), udf, aggregate_over);
        case OpKind::group_all: return fmt::format("group_all({}<{}>)", udf, aggregate_over);
        case OpKind::function_apply: {
            std::vector<std::string> parts;
            for (const auto& a : args) parts.push_back(a.to_string());
            return fmt::format("function_apply({}({}))", udf, fmt::join(parts, ", "));
        }
    }
    return "?";
}

std::vector<int> Dataflow::consumers(int id) const {
    std::vector<int> out;
    for (const auto& o : ops)
        if (std::find(o.inputs.begin(), o.inputs.end(), id) != o.inputs.end()) out.push_back(o.id);
    return out;
}

std::vector<int> Dataflow::writes() const {
    std::vector<int> out;
    for (const auto& o : ops)
        if (o.is_write()) out.push_back(o.id);
    return out;
}

std::string Halt::to_string() const {
    switch (kind) {
        case Kind::none: return "none";
        case Kind::dataset_empty: return fmt::format("dataset_empty({})", name);
        case Kind::function_udf_unchanged: return fmt::format("function_udf_unchanged({})", name);
    }
    return "?";
}

// Orders "L10" after "L9": digit runs compare numerically.
bool natural_less(const std::string& a, const std::string& b) {
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (std::isdigit(static_cast<unsigned char>(a[i])) && std::isdigit(static_cast<unsigned char>(b[j]))) {
            std::size_t ie = i, je = j;
            while (ie < a.size() && std::isdigit(static_cast<unsigned char>(a[ie]))) ++ie;
            while (je < b.size() && std::isdigit(static_cast<unsigned char>(b[je]))) ++je;
            const std::string na = a.substr(i, ie - i), nb = b.substr(j, je - j);
            if (na.size() != nb.size()) return na.size() < nb.size();
            if (na != nb) return na < nb;
            i = ie;
            j = je;
        } else {
            if (a[i] != b[j]) return a[i] < b[j];
            ++i;
            ++j;
        }
    }
    return a.size() - i < b.size() - j;
}

namespace {

bool root_less(const LogicalOperator& a, const LogicalOperator& b) {
    if (a.rule != b.rule) return natural_less(a.rule, b.rule);
    return a.label() < b.label();
}

}  // namespace

Dataflow canonicalize(const Dataflow& df) {
    const int n = static_cast<int>(df.ops.size());
    std::vector<int> roots = df.writes();
    std::stable_sort(roots.begin(), roots.end(), [&](int a, int b) { return root_less(df.op(a), df.op(b)); });
    // Operators no write depends on come after, in a content-based order.
    std::vector<int> sinks;
    for (int i = 0; i < n; ++i)
        if (!df.op(i).is_write() && df.consumers(i).empty()) sinks.push_back(i);
    std::stable_sort(sinks.begin(), sinks.end(), [&](int a, int b) { return root_less(df.op(a), df.op(b)); });
    roots.insert(roots.end(), sinks.begin(), sinks.end());

    std::vector<int> new_id(n, -1);
    std::vector<int> order;
    std::function<void(int)> visit = [&](int v) {
        if (new_id[v] >= 0) return;
        new_id[v] = -2;  // in progress
        for (int in : df.op(v).inputs)
            if (new_id[in] == -1) visit(in);
        new_id[v] = static_cast<int>(order.size());
        order.push_back(v);
    };
    for (int r : roots) visit(r);
    for (int i = 0; i < n; ++i) visit(i);  // anything left is on a cycle

    Dataflow out;
    for (int v : order) {
        LogicalOperator op = df.op(v);
        op.id = new_id[v];
        for (int& in : op.inputs) in = new_id[in];
        out.ops.push_back(std::move(op));
    }
    return out;
}

namespace {

void serialize_flow(const Dataflow& df, std::string& out) {
    for (const auto& op : canonicalize(df).ops) {
        out += fmt::format("#{} {}", op.id, op.label());
        if (!op.inputs.empty()) {
            std::vector<std::string> ins;
            for (int in : op.inputs) ins.push_back(fmt::format("#{}", in));
            out += fmt::format(" <- {}", fmt::join(ins, ", "));
        }
        out += fmt::format(" : ({})", fmt::join(op.schema, ", "));
        if (!op.rule.empty()) out += fmt::format(" {{{}}}", op.rule);
        out += "\n";
    }
}

}  // namespace

std::string canonical_serialize(const LogicalPlan& lp) {
    std::string out = "init:\n";
    serialize_flow(lp.init, out);
    out += "step:\n";
    serialize_flow(lp.step, out);
    out += fmt::format("recursive: {}\n", fmt::join(lp.recursive_datasets, ", "));
    out += fmt::format("halt: {}\n", lp.halt.to_string());
    return out;
}

namespace {

void check_flow(const Dataflow& df, const std::string& where, std::vector<std::string>& problems) {
    auto problem = [&](const LogicalOperator& op, const std::string& what) {
        problems.push_back(fmt::format("{} #{} {}: {}", where, op.id, op.label(), what));
    };
    const int n = static_cast<int>(df.ops.size());
    for (int i = 0; i < n; ++i) {
        const auto& op = df.ops[i];
        if (op.id != i) problem(op, "id does not match position");
        bool inputs_ok = true;
        for (int in : op.inputs)
            if (in < 0 || in >= n || in == i) {
                problem(op, fmt::format("bad input #{}", in));
                inputs_ok = false;
            }
        const std::set<std::string> own(op.schema.begin(), op.schema.end());
        if (own.size() != op.schema.size()) problem(op, "duplicate column names");
        if (!inputs_ok) continue;

        std::size_t lo = 1, hi = 1;
        switch (op.kind) {
            case OpKind::dataset: lo = 0; break;
            case OpKind::cross_product:
            case OpKind::inner_join: lo = hi = 2; break;
            case OpKind::projection:
            case OpKind::function_apply: lo = 0; break;
            default: break;
        }
        if (op.inputs.size() < lo || op.inputs.size() > hi) {
            problem(op, fmt::format("expects {}..{} inputs, has {}", lo, hi, op.inputs.size()));
            continue;
        }
        std::vector<std::string> in_schema;
        for (int in : op.inputs) {
            const auto& s = df.ops[in].schema;
            in_schema.insert(in_schema.end(), s.begin(), s.end());
        }
        auto has = [&](const std::string& c) { return std::find(in_schema.begin(), in_schema.end(), c) != in_schema.end(); };
        auto need = [&](const std::string& c) {
            if (!has(c)) problem(op, fmt::format("unknown column '{}'", c));
        };
        auto need_operand = [&](const Operand& o) {
            if (o.kind == Operand::Kind::column) need(o.column);
        };
        switch (op.kind) {
            case OpKind::dataset:
                if (op.is_write() && op.schema.size() != in_schema.size()) problem(op, "write changes arity");
                break;
            case OpKind::inner_join:
                for (const auto& k : op.keys) {
                    const auto& l = df.ops[op.inputs[0]].schema;
                    const auto& r = df.ops[op.inputs[1]].schema;
                    if (std::find(l.begin(), l.end(), k) == l.end() || std::find(r.begin(), r.end(), k) == r.end())
                        problem(op, fmt::format("join key '{}' missing from an input", k));
                }
                break;
            case OpKind::projection:
                for (const auto& it : op.items)
                    if (it.kind != ProjectionItem::Kind::constant) need(it.source);
                break;
            case OpKind::selection:
                need_operand(op.predicate.lhs);
                need_operand(op.predicate.rhs);
                if (op.schema != in_schema) problem(op, "selection changes schema");
                break;
            case OpKind::group_by:
                for (const auto& k : op.keys) need(k);
                need(op.aggregate_over);
                if (op.schema.size() != op.keys.size() + 1) problem(op, "group_by schema is keys plus aggregate");
                break;
            case OpKind::group_all:
                need(op.aggregate_over);
                if (op.schema.size() != 1) problem(op, "group_all yields one column");
                break;
            case OpKind::function_apply:
                for (const auto& a : op.args) need_operand(a);
                if (op.schema.size() < in_schema.size() ||
                    !std::equal(in_schema.begin(), in_schema.end(), op.schema.begin()))
                    problem(op, "function_apply must extend its input schema");
                break;
            case OpKind::cross_product:
                if (op.schema != in_schema) problem(op, "cross_product schema is the concatenation");
                break;
        }
    }
    // Acyclic: a canonical renumbering puts inputs first.
    const Dataflow c = canonicalize(df);
    for (const auto& op : c.ops)
        for (int in : op.inputs)
            if (in >= op.id) {
                problems.push_back(fmt::format("{}: dataflow has a cycle", where));
                return;
            }
}

}  // namespace

std::vector<std::string> check_plan(const LogicalPlan& lp) {
    std::vector<std::string> problems;
    check_flow(lp.init, "init", problems);
    check_flow(lp.step, "step", problems);
    switch (lp.halt.kind) {
        case Halt::Kind::none: break;
        case Halt::Kind::dataset_empty:
            if (std::find(lp.recursive_datasets.begin(), lp.recursive_datasets.end(), lp.halt.name) ==
                lp.recursive_datasets.end())
                problems.push_back(fmt::format("halt names unknown dataset '{}'", lp.halt.name));
            break;
        case Halt::Kind::function_udf_unchanged:
            if (std::none_of(lp.step.ops.begin(), lp.step.ops.end(), [&](const LogicalOperator& o) {
                    return o.kind == OpKind::function_apply && o.udf == lp.halt.name;
                }))
                problems.push_back(fmt::format("halt names unknown function '{}'", lp.halt.name));
            break;
    }
    return problems;
}

}  // namespace dlflow::logical
