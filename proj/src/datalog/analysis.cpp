#include "dlflow/datalog/analysis.hpp"

#include <map>

#include "dlflow/graph.hpp"

namespace dlflow::datalog {

namespace {

const Term* first_arg(const Atom& a, const HeadAggregate* agg) {
    if (a.args.empty()) return nullptr;
    if (agg && agg->present && agg->position == 0) return nullptr;
    return &a.args[0];
}

bool is_relational(const Atom& a) { return a.role == AtomRole::intensional || a.role == AtomRole::extensional; }

}  // namespace

ProgramInfo analyze_program(const Program& p) {
    ProgramInfo info;
    const auto preds = p.idb_predicates();
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < preds.size(); ++i) index[preds[i]] = static_cast<int>(i);

    std::vector<std::vector<int>> adj(preds.size());
    std::vector<bool> self_loop(preds.size(), false);
    for (const auto& r : p.rules) {
        const int h = index.at(r.head.predicate);
        for (const auto& b : r.body) {
            auto it = index.find(b.predicate);
            if (b.role != AtomRole::intensional || it == index.end()) continue;
            adj[it->second].push_back(h);
            if (it->second == h) self_loop[h] = true;
        }
    }
    for (const auto& comp : strongly_connected_components(adj))
        if (comp.size() > 1 || self_loop[comp[0]])
            for (int v : comp) info.recursive.insert(preds[v]);

    // Seed temporal predicates from successor arguments and integer heads.
    for (const auto& r : p.rules) {
        if (!info.is_recursive(r.head.predicate)) continue;
        if (const Term* t = first_arg(r.head, &r.aggregate)) {
            if ((t->is_variable() && t->offset == 1) || (t->is_constant() && t->value.is_int()))
                info.temporal.insert(r.head.predicate);
        }
        for (const auto& b : r.body) {
            if (!info.is_recursive(b.predicate) || b.role != AtomRole::intensional) continue;
            if (const Term* t = first_arg(b, nullptr); t && t->is_variable() && t->offset == 1)
                info.temporal.insert(b.predicate);
        }
    }

    // Propagate: a recursive predicate whose first argument is the variable
    // already tracking time in the same rule is temporal too.
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& r : p.rules) {
            std::set<std::string> vars;
            auto note = [&](const Atom& a, const HeadAggregate* agg) {
                if (!info.is_temporal(a.predicate)) return;
                if (const Term* t = first_arg(a, agg); t && t->is_variable()) vars.insert(t->name);
            };
            note(r.head, &r.aggregate);
            for (const auto& b : r.body)
                if (b.role == AtomRole::intensional) note(b, nullptr);
            if (vars.empty()) continue;
            auto mark = [&](const Atom& a, const HeadAggregate* agg) {
                if (!info.is_recursive(a.predicate) || info.is_temporal(a.predicate)) return;
                if (const Term* t = first_arg(a, agg); t && t->is_variable() && vars.count(t->name)) {
                    info.temporal.insert(a.predicate);
                    changed = true;
                }
            };
            mark(r.head, &r.aggregate);
            for (const auto& b : r.body)
                if (b.role == AtomRole::intensional) mark(b, nullptr);
        }
    }
    for (const auto& pred : info.recursive)
        if (!info.is_temporal(pred)) info.views.insert(pred);
    return info;
}

void annotate_temporal(Program& p) {
    const ProgramInfo info = analyze_program(p);
    for (auto& r : p.rules) {
        r.temporal.reset();
        if (info.is_temporal(r.head.predicate)) {
            const Term* t = first_arg(r.head, &r.aggregate);
            if (!t) continue;
            if (t->is_variable()) {
                r.temporal = Temporal{t->name, t->offset, std::nullopt, false};
            } else if (t->is_constant() && t->value.is_int() && t->value.as_int() >= 0) {
                Temporal tm;
                tm.constant_state = static_cast<std::uint64_t>(t->value.as_int());
                r.temporal = tm;
            }
            continue;
        }
        for (const auto& b : r.body) {
            if (b.role != AtomRole::intensional || !info.is_temporal(b.predicate)) continue;
            if (const Term* t = first_arg(b, nullptr); t && t->is_variable()) {
                Temporal tm;
                tm.var = t->name;
                tm.head_untimed = true;
                r.temporal = tm;
                break;
            }
        }
    }
}

bool carries_temporal_argument(const Atom& a, const Rule& r, const ProgramInfo& info) {
    if (a.role == AtomRole::intensional) return info.is_temporal(a.predicate);
    if (a.role != AtomRole::function || !r.temporal || r.temporal->var.empty() || a.args.empty()) return false;
    return a.args[0].is_variable() && a.args[0].name == r.temporal->var;
}

std::set<std::string> bound_variables(const Rule& r, const Program& p) {
    std::set<std::string> bound;
    for (const auto& b : r.body) {
        if (b.negated || !is_relational(b)) continue;
        std::vector<std::string> vars;
        for (const auto& t : b.args) t.collect_variables(vars);
        bound.insert(vars.begin(), vars.end());
    }
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& b : r.body) {
            if (b.negated || b.role != AtomRole::function) continue;
            const UdfDecl* u = p.find_udf(b.predicate);
            if (!u || b.args.size() < u->input_arity) continue;
            bool ready = true;
            for (std::size_t i = 0; i < u->input_arity && ready; ++i) {
                std::vector<std::string> vars;
                b.args[i].collect_variables(vars);
                for (const auto& v : vars) ready = ready && bound.count(v);
            }
            if (!ready) continue;
            for (std::size_t i = u->input_arity; i < b.args.size(); ++i) {
                std::vector<std::string> vars;
                b.args[i].collect_variables(vars);
                for (const auto& v : vars) changed = bound.insert(v).second || changed;
            }
        }
    }
    return bound;
}

}  // namespace dlflow::datalog
