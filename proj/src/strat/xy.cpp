#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "dlflow/datalog/analysis.hpp"
#include "dlflow/datalog/printer.hpp"
#include "dlflow/graph.hpp"
#include "dlflow/strat/strat.hpp"

namespace dlflow::strat {

using datalog::Atom;
using datalog::AtomRole;
using datalog::ProgramInfo;
using datalog::Rule;
using datalog::Term;

const char* tag_name(RuleClass::Tag t) {
    switch (t) {
        case RuleClass::Tag::nonrecursive: return "nonrecursive";
        case RuleClass::Tag::x_rule: return "x_rule";
        case RuleClass::Tag::y_rule: return "y_rule";
        case RuleClass::Tag::ill_formed: return "ill_formed";
    }
    return "?";
}

namespace {

// Temporal state of an atom occurrence: J, J+1, a constant, or none.
struct State {
    enum class Kind { none, variable, constant } kind = Kind::none;
    std::string var;
    int offset = 0;
    std::uint64_t constant = 0;

    bool operator==(const State&) const = default;

    std::string str() const {
        switch (kind) {
            case Kind::none: return "no state";
            case Kind::variable: return offset ? fmt::format("{}+{}", var, offset) : var;
            case Kind::constant: return std::to_string(constant);
        }
        return "?";
    }
};

State state_of_term(const Term& t) {
    State s;
    if (t.is_variable()) {
        s.kind = State::Kind::variable;
        s.var = t.name;
        s.offset = t.offset;
    } else if (t.is_constant() && t.value.is_int() && t.value.as_int() >= 0) {
        s.kind = State::Kind::constant;
        s.constant = static_cast<std::uint64_t>(t.value.as_int());
    }
    return s;
}

State current_state(const Rule& r) {
    State s;
    if (r.temporal && !r.temporal->var.empty()) {
        s.kind = State::Kind::variable;
        s.var = r.temporal->var;
    } else if (r.temporal && r.temporal->constant_state) {
        s.kind = State::Kind::constant;
        s.constant = *r.temporal->constant_state;
    }
    return s;
}

State head_state(const Rule& r, const ProgramInfo& info) {
    if (info.is_temporal(r.head.predicate)) {
        if (r.head.args.empty() || (r.aggregate.present && r.aggregate.position == 0)) return {};
        return state_of_term(r.head.args[0]);
    }
    if (info.is_view(r.head.predicate)) return current_state(r);
    return {};
}

// Role of a body atom with respect to time.
enum class Occurrence { plain, temporal, view, temporal_function };

Occurrence occurrence(const Atom& a, const Rule& r, const ProgramInfo& info) {
    if (a.role == AtomRole::intensional) {
        if (info.is_temporal(a.predicate)) return Occurrence::temporal;
        if (info.is_view(a.predicate)) return Occurrence::view;
        return Occurrence::plain;
    }
    if (a.role == AtomRole::function && datalog::carries_temporal_argument(a, r, info))
        return Occurrence::temporal_function;
    return Occurrence::plain;
}

State goal_state(const Atom& a, const Rule& r, const ProgramInfo& info) {
    switch (occurrence(a, r, info)) {
        case Occurrence::temporal:
        case Occurrence::temporal_function: return a.args.empty() ? State{} : state_of_term(a.args[0]);
        case Occurrence::view: return current_state(r);
        case Occurrence::plain: return {};
    }
    return {};
}

// Views are legitimate when grounded in temporal predicates (least fixpoint),
// e.g. maxVertexJ via max<J> over vertex and local via maxVertexJ.
std::set<std::string> grounded_views(const Program& p, const ProgramInfo& info) {
    std::set<std::string> ok;
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& v : info.views) {
            if (ok.count(v)) continue;
            bool all = true, any_rule = false;
            for (const auto& r : p.rules) {
                if (r.head.predicate != v) continue;
                any_rule = true;
                bool grounded = false;
                for (const auto& b : r.body)
                    if (b.role == AtomRole::intensional && !b.negated &&
                        (info.is_temporal(b.predicate) || ok.count(b.predicate)))
                        grounded = true;
                all = all && grounded;
            }
            if (any_rule && all) {
                ok.insert(v);
                changed = true;
            }
        }
    }
    return ok;
}

RuleClass ill(std::string clause, std::string reason) {
    return RuleClass{RuleClass::Tag::ill_formed, std::move(clause), std::move(reason)};
}

RuleClass classify_one(const Program& p, const Rule& r, const ProgramInfo& info, const std::set<std::string>& views) {
    const std::string& h = r.head.predicate;
    if (!info.is_recursive(h)) return {};

    if (info.is_view(h)) {
        if (!views.count(h))
            return ill("XY condition 1", fmt::format("recursive predicate '{}' has no temporal argument", h));
        for (const auto& b : r.body) {
            if (occurrence(b, r, info) != Occurrence::temporal && occurrence(b, r, info) != Occurrence::temporal_function)
                continue;
            const State s = goal_state(b, r, info);
            if (!(s.kind == State::Kind::variable && s.offset == 0 && s.var == r.temporal->var))
                return ill("X-rule", fmt::format("recursive goal '{}' is not at the current state", datalog::print_atom(b)));
        }
        return {RuleClass::Tag::x_rule, {}, {}};
    }

    const State hs = head_state(r, info);
    if (hs.kind == State::Kind::none)
        return ill("XY condition 1", fmt::format("head '{}' lacks a temporal argument", datalog::print_atom(r.head, &r.aggregate)));

    if (hs.kind == State::Kind::constant || hs.offset == 0) {
        for (const auto& b : r.body) {
            const Occurrence o = occurrence(b, r, info);
            if (o == Occurrence::plain) continue;
            const State s = goal_state(b, r, info);
            if (!(s == hs))
                return ill("X-rule", fmt::format("recursive goal '{}' is at state {}, not the current state {}",
                                                 datalog::print_atom(b), s.str(), hs.str()));
        }
        return {RuleClass::Tag::x_rule, {}, {}};
    }

    // Head at J+1: Y-rule candidate.
    State cur = hs;
    cur.offset = 0;
    bool has_current = false;
    for (const auto& b : r.body)
        if (!b.negated && occurrence(b, r, info) == Occurrence::temporal && goal_state(b, r, info) == cur)
            has_current = true;
    if (!has_current)
        return ill("Y-rule clause 2", fmt::format("no positive goal at the current state {}", cur.str()));
    for (const auto& b : r.body) {
        if (occurrence(b, r, info) == Occurrence::plain) continue;
        const State s = goal_state(b, r, info);
        if (!(s == cur || s == hs))
            return ill("Y-rule clause 3", fmt::format("goal '{}' is at state {}, expected {} or {}", datalog::print_atom(b),
                                                      s.str(), cur.str(), hs.str()));
    }
    (void)p;
    return {RuleClass::Tag::y_rule, {}, {}};
}

// Shared by classify (on the well-formed subset) and xy_transform.
Program transform(const Program& p, const std::vector<RuleClass>& classes, const ProgramInfo& info) {
    Program out;
    out.edb_decls = p.edb_decls;
    out.udf_decls = p.udf_decls;
    out.constants = p.constants;
    auto declare_renamed = [&](const std::string& original, const std::string& renamed) {
        if (out.find_udf(renamed)) return;
        const datalog::UdfDecl* u = p.find_udf(original);
        if (!u) return;
        datalog::UdfDecl d = *u;
        d.name = renamed;
        d.input_arity = d.input_arity > 0 ? d.input_arity - 1 : 0;
        out.udf_decls.push_back(d);
    };
    for (std::size_t i = 0; i < p.rules.size(); ++i) {
        const Rule& r = p.rules[i];
        if (!classes[i].ok()) continue;
        if (classes[i].tag == RuleClass::Tag::nonrecursive) {
            out.rules.push_back(r);
            out.rules.back().temporal.reset();
            continue;
        }
        const State hs = head_state(r, info);
        Rule t;
        t.label = r.label;
        t.line = r.line;
        t.head = r.head;
        t.head.predicate = "new_" + r.head.predicate;
        t.aggregate = r.aggregate;
        if (info.is_temporal(r.head.predicate)) {
            t.head.args.erase(t.head.args.begin());
            if (t.aggregate.present) --t.aggregate.position;
        }
        for (const auto& b : r.body) {
            Atom a = b;
            const Occurrence o = occurrence(b, r, info);
            if (o != Occurrence::plain) {
                const State s = goal_state(b, r, info);
                a.predicate = (s == hs ? "new_" : "old_") + b.predicate;
                if (o != Occurrence::view) a.args.erase(a.args.begin());
                if (o == Occurrence::temporal_function) declare_renamed(b.predicate, a.predicate);
            }
            t.body.push_back(std::move(a));
        }
        out.rules.push_back(std::move(t));
    }
    return out;
}

std::string cycle_text(const std::vector<std::string>& cycle) {
    if (cycle.empty()) return {};
    return fmt::format("{} -> {}", fmt::join(cycle, " -> "), cycle.front());
}

}  // namespace

std::vector<RuleClass> classify_rules(const Program& p) {
    const ProgramInfo info = datalog::analyze_program(p);
    const auto views = grounded_views(p, info);
    std::vector<RuleClass> classes;
    classes.reserve(p.rules.size());
    for (const auto& r : p.rules) classes.push_back(classify_one(p, r, info, views));

    // An X-rule may not close a cycle through aggregation or negation within
    // one state: the rule that feeds back into the state should have been a
    // Y-rule deriving the successor state.
    const Program t = transform(p, classes, info);
    const DependencyGraph g = build_dependency_graph(t);
    std::vector<std::vector<int>> adj(g.nodes.size());
    for (const auto& e : g.edges) adj[g.node_index(e.from)].push_back(g.node_index(e.to));
    const auto comps = strongly_connected_components(adj);
    const auto comp_of = component_ids(comps, static_cast<int>(g.nodes.size()));

    std::set<int> blamed_comps;
    for (const auto& e : g.edges) {
        if (e.kind == EdgeKind::positive) continue;
        const int c = comp_of[g.node_index(e.from)];
        if (c != comp_of[g.node_index(e.to)] || blamed_comps.count(c)) continue;

        std::vector<std::size_t> candidates;
        for (std::size_t i = 0; i < p.rules.size(); ++i) {
            const Rule& r = p.rules[i];
            if (classes[i].tag != RuleClass::Tag::x_rule || r.aggregate.present) continue;
            if (!info.is_temporal(r.head.predicate)) continue;
            const State hs = head_state(r, info);
            if (hs.kind != State::Kind::variable) continue;
            const int n = g.node_index("new_" + r.head.predicate);
            if (n >= 0 && comp_of[n] == c) candidates.push_back(i);
        }
        if (candidates.empty()) continue;
        std::vector<std::size_t> seeded;
        for (std::size_t i : candidates) {
            for (const auto& r : p.rules) {
                if (r.head.predicate != p.rules[i].head.predicate || !r.temporal || !r.temporal->constant_state) continue;
                seeded.push_back(i);
                break;
            }
        }
        const auto& blame = seeded.empty() ? candidates : seeded;

        // Name the cycle for the diagnostic.
        std::vector<std::string> members;
        for (int v : comps[c]) members.push_back(g.nodes[v]);
        for (std::size_t i : blame) {
            const Rule& r = p.rules[i];
            classes[i] = ill("Y-rule clause 1",
                             fmt::format("head '{}' must be at the successor state {}+1; otherwise {{{}}} forms a cycle "
                                         "through {} within one state",
                                         datalog::print_atom(r.head, &r.aggregate), r.temporal->var,
                                         fmt::join(members, ", "), edge_kind_name(e.kind)));
        }
        blamed_comps.insert(c);
    }
    return classes;
}

Program xy_transform(const Program& p) {
    const auto classes = classify_rules(p);
    for (std::size_t i = 0; i < classes.size(); ++i)
        if (!classes[i].ok())
            throw IllFormedProgram(fmt::format("rule {} is ill-formed ({}): {}", p.rules[i].id(i), classes[i].clause,
                                               classes[i].reason));
    return transform(p, classes, datalog::analyze_program(p));
}

XYVerdict check_xy(const Program& p) {
    XYVerdict v;
    v.classes = classify_rules(p);
    for (std::size_t i = 0; i < v.classes.size(); ++i) {
        if (v.classes[i].ok()) continue;
        v.offending_rule = i;
        v.reason = fmt::format("rule {}: {}: {}", p.rules[i].id(i), v.classes[i].clause, v.classes[i].reason);
        return v;
    }
    v.transformed = transform(p, v.classes, datalog::analyze_program(p));
    StratifyResult s = stratify(*v.transformed);
    if (!s.ok()) {
        v.cycle = s.cycle;
        v.reason = fmt::format("stratification: cycle through negation or aggregation after the XY transform: {}",
                               cycle_text(s.cycle));
        return v;
    }
    v.strata = std::move(s.strata);
    v.stratified = true;

    const ProgramInfo info = datalog::analyze_program(p);
    auto is_init = [&](std::size_t i) {
        const Rule& r = p.rules[i];
        if (v.classes[i].tag == RuleClass::Tag::nonrecursive) return true;
        return r.temporal && r.temporal->constant_state.has_value() && !info.is_view(r.head.predicate);
    };
    for (const auto& group : v.strata->groups)
        for (std::size_t i : group)
            if (is_init(i)) v.schedule.init.push_back(i);
    for (const auto& group : v.strata->groups)
        for (std::size_t i : group)
            if (!is_init(i) && v.classes[i].tag == RuleClass::Tag::x_rule) v.schedule.step.push_back(i);
    for (std::size_t i = 0; i < p.rules.size(); ++i)
        if (v.classes[i].tag == RuleClass::Tag::y_rule) v.schedule.step.push_back(i);
    return v;
}

std::string format_verdict(const Program& p, const XYVerdict& v) {
    std::string s = fmt::format("verdict: {}\n", v.stratified ? "xy-stratified" : "rejected");
    if (!v.stratified) s += fmt::format("reason: {}\n", v.reason);
    s += "rules:\n";
    for (std::size_t i = 0; i < p.rules.size(); ++i) {
        const auto& c = v.classes.at(i);
        s += fmt::format("  {:<8} {:<12} {}\n", p.rules[i].id(i), tag_name(c.tag), datalog::print_rule(p.rules[i]));
        if (!c.ok()) s += fmt::format("           {}: {}\n", c.clause, c.reason);
    }
    if (v.transformed) {
        s += "transformed:\n";
        for (const auto& r : v.transformed->rules) s += "  " + datalog::print_rule(r) + "\n";
    }
    if (!v.cycle.empty()) s += fmt::format("cycle: {}\n", cycle_text(v.cycle));
    if (v.strata) {
        s += fmt::format("strata: {}\n", v.strata->count);
        for (int k = 0; k < v.strata->count; ++k) {
            std::vector<std::string> preds;
            for (const auto& [name, st] : v.strata->assignment)
                if (st == k) preds.push_back(name);
            s += fmt::format("  {}: {}\n", k, fmt::join(preds, ", "));
        }
        auto ids = [&](const std::vector<std::size_t>& rules) {
            std::vector<std::string> out;
            for (std::size_t i : rules) out.push_back(p.rules[i].id(i));
            return fmt::format("{}", fmt::join(out, ", "));
        };
        s += "schedule:\n";
        s += fmt::format("  init: {}\n", ids(v.schedule.init));
        s += fmt::format("  step: {}\n", ids(v.schedule.step));
    }
    return s;
}

}  // namespace dlflow::strat
