#include <algorithm>
#include <map>
#include <set>

#include <fmt/format.h>

#include "dlflow/datalog/analysis.hpp"
#include "dlflow/logical/plan.hpp"

namespace dlflow::logical {

using datalog::Atom;
using datalog::AtomRole;
using datalog::Program;
using datalog::ProgramInfo;
using datalog::Rule;
using datalog::Term;

namespace {

// Columns a consumer sees when it reads an intermediate predicate: one per
// head position (temporal argument excluded).
struct NodeRef {
    int op = -1;
    std::vector<std::string> columns;
};

struct Scope {
    int cur = -1;
    std::vector<std::string> schema;
    std::map<std::string, std::string> column_of;  // variable -> column

    bool has_column(const std::string& c) const { return std::find(schema.begin(), schema.end(), c) != schema.end(); }
    bool bound(const std::string& v) const { return column_of.count(v) > 0; }
};

class Compiler {
public:
    explicit Compiler(const Program& p) : p_(p), info_(datalog::analyze_program(p)) {}

    void compile_rule(std::size_t index, Dataflow& df, std::map<std::string, NodeRef>& nodes,
                      const std::set<std::string>& node_preds, const std::map<std::string, bool>& virtual_ok) {
        const Rule& r = p_.rules[index];
        df_ = &df;
        nodes_ = &nodes;
        node_preds_ = &node_preds;
        rule_ = &r;
        rule_id_ = r.id(index);
        Scope s;

        for (const auto& a : r.body)
            if (a.negated) fail("negated goals are not supported by the logical compiler");

        std::vector<const Atom*> pending;
        for (const auto& a : r.body) pending.push_back(&a);
        while (!pending.empty()) {
            std::vector<const Atom*> rest;
            for (const Atom* a : pending) {
                if (!ready(*a, s)) {
                    rest.push_back(a);
                    continue;
                }
                if (a->role == AtomRole::comparison) apply_comparison(*a, s);
                else if (a->role == AtomRole::function) apply_function(*a, s);
                else apply_relational(*a, s);
            }
            if (rest.size() == pending.size()) fail("cannot order body goals: some inputs are never bound");
            pending = std::move(rest);
        }
        compile_head(s, virtual_ok);
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw UnsupportedConstruct(fmt::format("rule {}: {}", rule_id_, what));
    }

    bool untimed_rule() const { return rule_->temporal && rule_->temporal->head_untimed; }

    std::size_t input_arity(const Atom& a) const {
        const auto* u = p_.find_udf(a.predicate);
        return u ? u->input_arity : 0;
    }

    bool ready(const Atom& a, const Scope& s) const {
        auto all_bound = [&](const Term& t) {
            std::vector<std::string> vars;
            t.collect_variables(vars);
            return std::all_of(vars.begin(), vars.end(), [&](const std::string& v) { return s.bound(v); });
        };
        if (a.role == AtomRole::comparison) return all_bound(a.args[0]) && all_bound(a.args[1]);
        if (a.role == AtomRole::function) {
            const bool timed = passes_iteration(a);
            for (std::size_t i = timed ? 1 : 0; i < input_arity(a); ++i)
                if (!all_bound(a.args[i])) return false;
        }
        return true;
    }

    bool passes_iteration(const Atom& a) const {
        return !untimed_rule() && datalog::carries_temporal_argument(a, *rule_, info_);
    }

    std::string fresh(const std::string& base, const Scope& s, const std::vector<std::string>& also = {}) const {
        std::string name = base;
        auto taken = [&](const std::string& n) {
            return s.has_column(n) || std::find(also.begin(), also.end(), n) != also.end();
        };
        while (taken(name)) name += "'";
        return name;
    }

    int add(LogicalOperator op) {
        op.id = static_cast<int>(df_->ops.size());
        op.rule = rule_id_;
        df_->ops.push_back(std::move(op));
        return df_->ops.back().id;
    }

    int add_selection(int input, const std::vector<std::string>& schema, Comparison c) {
        LogicalOperator op;
        op.kind = OpKind::selection;
        op.inputs = {input};
        op.schema = schema;
        op.predicate = std::move(c);
        return add(std::move(op));
    }

    Operand operand(const Term& t, const Scope& s) const {
        if (t.is_variable()) return Operand::of_column(s.column_of.at(t.name));
        if (t.is_constant()) return Operand::of_constant(t);
        fail("only variables and constants may appear in comparisons and function inputs");
    }

    DatasetRef dataset_ref(const Atom& a) const {
        DatasetRef d;
        d.name = a.predicate;
        if (!info_.is_temporal(a.predicate)) return d;
        const Term& t = a.args.at(0);
        if (untimed_rule()) {
            d.version = DatasetRef::Version::history;
        } else if (t.is_constant() && t.value.is_int()) {
            d.version = DatasetRef::Version::constant;
            d.state = static_cast<std::uint64_t>(t.value.as_int());
        } else if (t.is_variable() && t.offset == 0) {
            d.version = DatasetRef::Version::current;
        } else if (t.is_variable() && t.offset == 1) {
            d.version = DatasetRef::Version::next;
        } else {
            fail(fmt::format("unsupported temporal argument in {}", a.predicate));
        }
        return d;
    }

    // Joins `right` into the scope on the columns both share.
    void join(Scope& s, int right, const std::vector<std::string>& right_schema) {
        if (s.cur < 0) {
            s.cur = right;
            s.schema = right_schema;
            return;
        }
        LogicalOperator op;
        for (const auto& c : s.schema)
            if (std::find(right_schema.begin(), right_schema.end(), c) != right_schema.end()) op.keys.push_back(c);
        op.kind = op.keys.empty() ? OpKind::cross_product : OpKind::inner_join;
        op.inputs = {s.cur, right};
        op.schema = s.schema;
        for (const auto& c : right_schema)
            if (std::find(op.keys.begin(), op.keys.end(), c) == op.keys.end()) op.schema.push_back(c);
        s.schema = op.schema;
        s.cur = add(std::move(op));
    }

    void apply_relational(const Atom& a, Scope& s) {
        const bool temporal = info_.is_temporal(a.predicate);
        if (node_preds_->count(a.predicate)) {
            apply_node(a, s);
            return;
        }
        // Dataset read: columns named after the reader's variables.
        const DatasetRef ref = dataset_ref(a);
        const std::size_t first = temporal && ref.version != DatasetRef::Version::history ? 1 : 0;
        LogicalOperator read;
        read.kind = OpKind::dataset;
        read.dataset = ref;
        std::vector<Comparison> checks;
        std::map<std::string, std::string> local;  // first column of each variable in this atom
        for (std::size_t k = first; k < a.args.size(); ++k) {
            const Term& t = a.args[k];
            std::string name;
            if (t.is_variable() && t.offset == 0) {
                if (local.count(t.name)) {
                    name = fresh(t.name, s, read.schema);
                    checks.push_back({"=", Operand::of_column(local[t.name]), Operand::of_column(name)});
                } else if (s.bound(t.name)) {
                    name = s.column_of.at(t.name);
                } else {
                    name = fresh(t.name, s, read.schema);
                }
                local.emplace(t.name, name);
            } else if (t.kind == Term::Kind::wildcard) {
                name = fresh(fmt::format("_{}", k), s, read.schema);
            } else if (t.is_constant()) {
                name = fresh(fmt::format("_{}", k), s, read.schema);
                checks.push_back({"=", Operand::of_column(name), Operand::of_constant(t)});
            } else {
                fail(fmt::format("unsupported term in dataset goal {}", a.predicate));
            }
            read.schema.push_back(name);
        }
        const std::vector<std::string> schema = read.schema;
        int cur = add(std::move(read));
        for (auto& c : checks) cur = add_selection(cur, schema, std::move(c));
        // Any column the scope already has must stand for the same variable.
        for (const auto& [var, col] : local)
            if (!s.bound(var)) s.column_of[var] = col;
        join(s, cur, schema);
    }

    void apply_node(const Atom& a, Scope& s) {
        const NodeRef& node = nodes_->at(a.predicate);
        const std::size_t first = info_.is_temporal(a.predicate) ? 1 : 0;
        const LogicalOperator& src = df_->op(node.op);
        std::vector<std::string> src_schema = src.schema;
        int cur = node.op;

        // Constants in the goal filter the node's output first.
        for (std::size_t k = first; k < a.args.size(); ++k) {
            const Term& t = a.args[k];
            if (t.is_constant())
                cur = add_selection(cur, src_schema,
                                    {"=", Operand::of_column(node.columns[k - first]), Operand::of_constant(t)});
        }

        std::vector<ProjectionItem> items;
        std::vector<std::string> out_names;
        std::map<std::string, std::string> newly;
        std::vector<Comparison> equalities;
        bool rename = false;
        for (std::size_t k = first; k < a.args.size(); ++k) {
            const Term& t = a.args[k];
            const std::string& col = node.columns[k - first];
            if (t.is_variable()) {
                std::string want;
                if (s.bound(t.name)) {
                    want = s.column_of.at(t.name);
                } else if (newly.count(t.name)) {
                    want = fresh(t.name, s, out_names);
                    equalities.push_back({"=", Operand::of_column(newly[t.name]), Operand::of_column(want)});
                } else {
                    want = s.has_column(col) || std::count(out_names.begin(), out_names.end(), col)
                               ? fresh(t.name, s, out_names)
                               : col;
                    newly.emplace(t.name, want);
                }
                if (want != col) rename = true;
                items.push_back(ProjectionItem::of_column(want, col));
                out_names.push_back(want);
            } else if (t.kind == Term::Kind::set_of) {
                const Term& inner = t.items.at(0);
                std::vector<const Term*> parts;
                if (inner.kind == Term::Kind::tuple_of)
                    for (const auto& it : inner.items) parts.push_back(&it);
                else
                    parts.push_back(&inner);
                std::vector<std::string> names;
                for (std::size_t j = 0; j < parts.size(); ++j) {
                    const Term& pt = *parts[j];
                    std::string name;
                    if (pt.is_variable() && pt.offset == 0 && !s.bound(pt.name) && !newly.count(pt.name)) {
                        name = fresh(pt.name, s, out_names);
                        newly.emplace(pt.name, name);
                    } else if (pt.is_variable() && pt.offset == 0) {
                        name = fresh(pt.name, s, out_names);
                        const std::string other = s.bound(pt.name) ? s.column_of.at(pt.name) : newly[pt.name];
                        equalities.push_back({"=", Operand::of_column(other), Operand::of_column(name)});
                    } else if (pt.kind == Term::Kind::wildcard) {
                        name = fresh(fmt::format("_{}_{}", k, j), s, out_names);
                    } else {
                        fail("set patterns may contain only variables and wildcards");
                    }
                    names.push_back(name);
                    out_names.push_back(name);
                }
                items.push_back(ProjectionItem::of_unnest(col, names));
                rename = true;
            } else if (t.kind == Term::Kind::wildcard || t.is_constant()) {
                rename = rename || s.has_column(col);
            } else {
                fail(fmt::format("unsupported term in goal {}", a.predicate));
            }
        }
        // Columns of the source that this goal does not name must not leak
        // into the scope under a clashing name.
        for (const auto& c : src_schema)
            if (std::find(node.columns.begin(), node.columns.end(), c) == node.columns.end() && s.has_column(c))
                rename = true;

        std::vector<std::string> schema = src_schema;
        if (rename) {
            LogicalOperator proj;
            proj.kind = OpKind::projection;
            proj.inputs = {cur};
            proj.items = items;
            proj.schema = out_names;
            schema = out_names;
            cur = add(std::move(proj));
        }
        for (auto& c : equalities) cur = add_selection(cur, schema, std::move(c));
        for (const auto& [var, col] : newly) s.column_of[var] = col;
        join(s, cur, schema);
    }

    void apply_function(const Atom& a, Scope& s) {
        const std::size_t n_in = input_arity(a);
        const bool timed = passes_iteration(a);
        LogicalOperator op;
        op.kind = OpKind::function_apply;
        op.udf = a.predicate;
        for (std::size_t i = 0; i < n_in; ++i) {
            if (i == 0 && timed) op.args.push_back(Operand::iteration(a.args[0].name));
            else op.args.push_back(operand(a.args[i], s));
        }
        if (s.cur >= 0) op.inputs = {s.cur};
        op.schema = s.schema;
        std::vector<Comparison> checks;
        std::vector<std::pair<std::string, std::string>> binds;
        for (std::size_t i = n_in; i < a.args.size(); ++i) {
            const Term& t = a.args[i];
            std::string name;
            if (t.is_variable() && t.offset == 0 && !s.bound(t.name)) {
                name = fresh(t.name, s, op.schema);
                binds.emplace_back(t.name, name);
            } else if (t.is_variable() && t.offset == 0) {
                name = fresh(t.name, s, op.schema);
                checks.push_back({"=", Operand::of_column(s.column_of.at(t.name)), Operand::of_column(name)});
            } else if (t.kind == Term::Kind::wildcard) {
                name = fresh(fmt::format("_{}", i), s, op.schema);
            } else if (t.is_constant()) {
                name = fresh(fmt::format("_{}", i), s, op.schema);
                checks.push_back({"=", Operand::of_column(name), Operand::of_constant(t)});
            } else {
                fail(fmt::format("unsupported output term of {}", a.predicate));
            }
            op.schema.push_back(name);
        }
        s.schema = op.schema;
        s.cur = add(std::move(op));
        for (auto& c : checks) s.cur = add_selection(s.cur, s.schema, std::move(c));
        for (const auto& [v, c] : binds) s.column_of[v] = c;
    }

    void apply_comparison(const Atom& a, Scope& s) {
        if (s.cur < 0) fail("comparison without any relation to filter");
        s.cur = add_selection(s.cur, s.schema, {a.predicate, operand(a.args[0], s), operand(a.args[1], s)});
    }

    void compile_head(Scope& s, const std::map<std::string, bool>& virtual_ok) {
        const Rule& r = *rule_;
        const Atom& h = r.head;
        const bool temporal = info_.is_temporal(h.predicate);
        const std::size_t first = temporal ? 1 : 0;
        const bool is_node = node_preds_->count(h.predicate) > 0;

        auto column_for = [&](const Term& t) -> std::string {
            if (!t.is_variable() || !s.bound(t.name)) fail(fmt::format("head variable {} is not bound by the body", t.name));
            return s.column_of.at(t.name);
        };

        if (r.aggregate.present) {
            if (!r.aggregate.over.is_variable()) fail("aggregates must range over a variable");
            LogicalOperator op;
            op.udf = r.aggregate.name;
            op.aggregate_over = column_for(r.aggregate.over);
            std::vector<std::size_t> positions;
            for (std::size_t k = first; k < h.args.size(); ++k) {
                if (k == r.aggregate.position) continue;
                if (!h.args[k].is_variable()) fail("grouping keys must be variables");
                op.keys.push_back(column_for(h.args[k]));
                positions.push_back(k);
            }
            op.kind = op.keys.empty() ? OpKind::group_all : OpKind::group_by;
            if (s.cur < 0) fail("aggregate without a body relation");
            op.inputs = {s.cur};
            op.schema = op.keys;
            op.schema.push_back(op.aggregate_over);
            if (std::set<std::string>(op.schema.begin(), op.schema.end()).size() != op.schema.size())
                fail("aggregate output repeats a column");
            const std::vector<std::string> out = op.schema;
            int cur = add(std::move(op));
            // Head order: keys in place, aggregate at its position.
            std::vector<std::string> ordered;
            std::size_t key = 0;
            for (std::size_t k = first; k < h.args.size(); ++k)
                ordered.push_back(k == r.aggregate.position ? out.back() : out[key++]);
            if (ordered != out) {
                LogicalOperator proj;
                proj.kind = OpKind::projection;
                proj.inputs = {cur};
                for (const auto& c : ordered) proj.items.push_back(ProjectionItem::of_column(c, c));
                proj.schema = ordered;
                cur = add(std::move(proj));
            }
            finish_head(cur, ordered, is_node);
            return;
        }

        // Plain head: a projection onto the head arguments.
        std::vector<ProjectionItem> items;
        std::vector<std::string> names;
        bool all_plain = true;
        for (std::size_t k = first; k < h.args.size(); ++k) {
            const Term& t = h.args[k];
            if (t.is_variable()) {
                const std::string src = column_for(t);
                const std::string name =
                    std::find(names.begin(), names.end(), t.name) == names.end() ? t.name : fresh(t.name, Scope{}, names);
                items.push_back(ProjectionItem::of_column(name, src));
                names.push_back(name);
            } else if (t.is_constant()) {
                const std::string name = fresh(fmt::format("c{}", k), Scope{}, names);
                items.push_back(ProjectionItem::of_constant(name, t));
                names.push_back(name);
                all_plain = false;
            } else {
                fail("heads may contain only variables and constants");
            }
        }

        if (is_node && all_plain && s.cur >= 0) {
            auto it = virtual_ok.find(h.predicate);
            if (it != virtual_ok.end() && it->second) {
                std::vector<std::string> cols;
                for (const auto& item : items) cols.push_back(item.source);
                if (std::set<std::string>(cols.begin(), cols.end()).size() == cols.size()) {
                    define_node(s.cur, cols);
                    return;
                }
            }
        }

        int cur = s.cur;
        const bool identity_over_projection =
            cur >= 0 && df_->op(cur).kind == OpKind::projection && df_->op(cur).rule == rule_id_ &&
            df_->op(cur).schema == names &&
            std::all_of(items.begin(), items.end(),
                        [](const ProjectionItem& i) { return i.kind == ProjectionItem::Kind::column && i.names[0] == i.source; });
        if (!identity_over_projection) {
            LogicalOperator proj;
            proj.kind = OpKind::projection;
            if (cur >= 0) proj.inputs = {cur};
            proj.items = items;
            proj.schema = names;
            cur = add(std::move(proj));
        }
        finish_head(cur, names, is_node);
    }

    void finish_head(int cur, const std::vector<std::string>& columns, bool is_node) {
        if (is_node) {
            define_node(cur, columns);
            return;
        }
        LogicalOperator w;
        w.kind = OpKind::dataset;
        w.inputs = {cur};
        w.schema = columns;
        w.dataset.name = rule_->head.predicate;
        if (info_.is_temporal(rule_->head.predicate)) {
            const Term& t = rule_->head.args.at(0);
            if (t.is_constant() && t.value.is_int()) {
                w.dataset.version = DatasetRef::Version::constant;
                w.dataset.state = static_cast<std::uint64_t>(t.value.as_int());
            } else if (t.is_variable() && t.offset == 1) {
                w.dataset.version = DatasetRef::Version::next;
            } else {
                fail("only state-0 and J+1 heads write datasets");
            }
        }
        add(std::move(w));
    }

    void define_node(int op, std::vector<std::string> columns) {
        if (nodes_->count(rule_->head.predicate))
            fail(fmt::format("{} is defined by more than one rule", rule_->head.predicate));
        (*nodes_)[rule_->head.predicate] = NodeRef{op, std::move(columns)};
    }

    const Program& p_;
    ProgramInfo info_;
    Dataflow* df_ = nullptr;
    std::map<std::string, NodeRef>* nodes_ = nullptr;
    const std::set<std::string>* node_preds_ = nullptr;
    const Rule* rule_ = nullptr;
    std::string rule_id_;
};

std::size_t count_relational(const Rule& r) {
    return static_cast<std::size_t>(std::count_if(r.body.begin(), r.body.end(), [](const Atom& a) {
        return a.role == AtomRole::extensional || a.role == AtomRole::intensional;
    }));
}

Halt detect_halt(const Program& p, const std::vector<std::size_t>& step, const Dataflow& df) {
    // A Y-rule guarded by "input != output of a function" stops once the
    // function returns its input unchanged.
    for (std::size_t i : step) {
        const Rule& r = p.rules[i];
        for (const auto& c : r.body) {
            if (c.role != AtomRole::comparison || c.predicate != "!=") continue;
            for (const auto& f : r.body) {
                if (f.role != AtomRole::function) continue;
                const auto* u = p.find_udf(f.predicate);
                if (!u) continue;
                auto is_in = [&](const Term& t, std::size_t lo, std::size_t hi) {
                    for (std::size_t k = lo; k < hi && k < f.args.size(); ++k)
                        if (t.is_variable() && f.args[k] == t) return true;
                    return false;
                };
                const Term& l = c.args[0];
                const Term& rr = c.args[1];
                const std::size_t n_in = u->input_arity;
                if ((is_in(l, 0, n_in) && is_in(rr, n_in, f.args.size())) ||
                    (is_in(rr, 0, n_in) && is_in(l, n_in, f.args.size())))
                    return {Halt::Kind::function_udf_unchanged, f.predicate};
            }
        }
    }
    // Otherwise: stop when the first dataset read at the current state is empty.
    for (const auto& op : df.ops)
        if (op.is_read() && op.dataset.version == DatasetRef::Version::current)
            return {Halt::Kind::dataset_empty, op.dataset.name};
    for (const auto& op : df.ops)
        if (op.is_write() && op.dataset.version == DatasetRef::Version::next)
            return {Halt::Kind::dataset_empty, op.dataset.name};
    return {};
}

}  // namespace

LogicalPlan compile_logical(const Program& p, const strat::XYVerdict& v) {
    if (!v.stratified) throw strat::IllFormedProgram(v.reason);
    const ProgramInfo info = datalog::analyze_program(p);
    LogicalPlan lp;

    // Nonrecursive rules reading recursive predicates would need the final
    // fixpoint; they are outside what a single init/step pair expresses.
    for (std::size_t i : v.schedule.init) {
        const Rule& r = p.rules[i];
        if (info.is_recursive(r.head.predicate)) continue;
        for (const auto& a : r.body)
            if (a.role == AtomRole::intensional && info.is_recursive(a.predicate))
                throw UnsupportedConstruct(fmt::format("rule {}: nonrecursive rule reads recursive predicate {}",
                                                       r.id(i), a.predicate));
    }

    {
        Compiler c(p);
        std::map<std::string, NodeRef> nodes;
        const std::set<std::string> none;
        for (std::size_t i : v.schedule.init) c.compile_rule(i, lp.init, nodes, none, {});
    }

    // Step heads at the current state (and views) stay inside the dataflow.
    std::set<std::string> node_preds;
    for (std::size_t i : v.schedule.step) {
        const Rule& r = p.rules[i];
        if (r.temporal && r.temporal->head_offset == 1 && !r.temporal->head_untimed &&
            !r.temporal->constant_state && info.is_temporal(r.head.predicate))
            continue;
        node_preds.insert(r.head.predicate);
    }
    // A node may skip its head projection when every reader uses it alone.
    std::map<std::string, bool> virtual_ok;
    for (const auto& n : node_preds) {
        bool ok = true, read = false;
        for (std::size_t i : v.schedule.step) {
            const Rule& r = p.rules[i];
            for (const auto& a : r.body) {
                if (a.predicate != n || a.role == AtomRole::function || a.role == AtomRole::comparison) continue;
                read = true;
                if (count_relational(r) != 1) ok = false;
            }
        }
        virtual_ok[n] = ok && read;
    }
    {
        Compiler c(p);
        std::map<std::string, NodeRef> nodes;
        for (std::size_t i : v.schedule.step) c.compile_rule(i, lp.step, nodes, node_preds, virtual_ok);
    }

    lp.init = canonicalize(lp.init);
    lp.step = canonicalize(lp.step);
    std::set<std::string> recursive;
    for (const auto& op : lp.step.ops)
        if (op.is_write() && op.dataset.version == DatasetRef::Version::next) recursive.insert(op.dataset.name);
    lp.recursive_datasets.assign(recursive.begin(), recursive.end());
    lp.halt = detect_halt(p, v.schedule.step, lp.step);
    return lp;
}

LogicalPlan compile_logical(const Program& p) {
    const auto v = strat::check_xy(p);
    if (!v.stratified) throw strat::IllFormedProgram(v.reason);
    return compile_logical(p, v);
}

}  // namespace dlflow::logical
