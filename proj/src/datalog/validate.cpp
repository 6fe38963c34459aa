#include "dlflow/datalog/validate.hpp"

#include <map>
#include <set>

#include <fmt/format.h>

#include "dlflow/datalog/analysis.hpp"
#include "dlflow/datalog/printer.hpp"

namespace dlflow::datalog {

bool ValidationReport::has(const std::string& kind) const {
    for (const auto& v : violations)
        if (v.kind == kind) return true;
    return false;
}

std::string ValidationReport::to_string() const {
    std::string s;
    for (const auto& v : violations)
        s += fmt::format("{}{}: {}\n", v.rule.empty() ? "" : v.rule + ": ", v.kind, v.message);
    return s;
}

namespace {

std::vector<std::string> vars_of(const Term& t) {
    std::vector<std::string> out;
    t.collect_variables(out);
    return out;
}

bool has_set_term(const Term& t) {
    if (t.kind == Term::Kind::set_of) return true;
    for (const auto& i : t.items)
        if (has_set_term(i)) return true;
    return false;
}

class Validator {
public:
    explicit Validator(const Program& p) : p_(p), info_(analyze_program(p)) {}

    ValidationReport run() {
        check_arities();
        const auto defined = p_.idb_predicates();
        const std::set<std::string> defined_set(defined.begin(), defined.end());
        for (std::size_t i = 0; i < p_.rules.size(); ++i) check_rule(p_.rules[i], p_.rules[i].id(i), defined_set);
        return std::move(report_);
    }

private:
    void add(const std::string& rule, const std::string& kind, const std::string& msg) {
        report_.violations.push_back({rule, kind, msg});
    }

    void check_arities() {
        std::map<std::string, std::size_t> seen;
        auto check = [&](const Atom& a, const std::string& rule) {
            if (a.role == AtomRole::comparison) {
                if (a.args.size() != 2) add(rule, "arity_mismatch", fmt::format("comparison '{}' needs 2 arguments", a.predicate));
                return;
            }
            std::size_t expected;
            if (auto* e = p_.find_edb(a.predicate)) expected = e->arity;
            else if (auto* u = p_.find_udf(a.predicate); u && !u->is_aggregate) expected = u->input_arity + u->output_arity;
            else if (auto [it, fresh] = seen.emplace(a.predicate, a.arity()); fresh) return;
            else expected = it->second;
            if (a.arity() != expected)
                add(rule, "arity_mismatch",
                    fmt::format("'{}' used with {} arguments, expected {}", a.predicate, a.arity(), expected));
        };
        for (std::size_t i = 0; i < p_.rules.size(); ++i) {
            const auto& r = p_.rules[i];
            check(r.head, r.id(i));
            for (const auto& b : r.body) check(b, r.id(i));
        }
    }

    void check_rule(const Rule& r, const std::string& id, const std::set<std::string>& defined) {
        if (p_.find_edb(r.head.predicate))
            add(id, "edb_redefined", fmt::format("extensional predicate '{}' cannot be a rule head", r.head.predicate));
        if (auto* u = p_.find_udf(r.head.predicate))
            add(id, "udf_redefined", fmt::format("UDF '{}' cannot be a rule head", u->name));

        for (const auto& t : r.head.args)
            if (has_set_term(t)) add(id, "set_in_head", "set-valued terms may only appear in rule bodies");

        if (r.aggregate.present) {
            const UdfDecl* u = p_.find_udf(r.aggregate.name);
            if (!is_builtin_aggregate(r.aggregate.name) && !(u && u->is_aggregate))
                add(id, "unknown_aggregate", fmt::format("aggregate '{}' is not declared", r.aggregate.name));
            if (r.aggregate.over.kind != Term::Kind::variable || r.aggregate.over.offset != 0)
                add(id, "aggregate_argument", "aggregates range over a single plain variable");
        }

        for (const auto& b : r.body) {
            if (b.role == AtomRole::comparison) continue;
            if (b.role == AtomRole::intensional && !defined.count(b.predicate))
                add(id, "undeclared_predicate", fmt::format("'{}' is neither declared nor defined", b.predicate));
            if (b.role == AtomRole::function) {
                const UdfDecl* u = p_.find_udf(b.predicate);
                if (!u) add(id, "undeclared_udf", fmt::format("UDF '{}' is not declared", b.predicate));
            }
        }

        const std::set<std::string> bound = bound_variables(r, p_);

        // Range restriction over the head (aggregate inputs must be bound too).
        for (std::size_t i = 0; i < r.head.args.size(); ++i) {
            for (const auto& v : vars_of(r.head.args[i])) {
                if (bound.count(v)) continue;
                const bool agg = r.aggregate.present && r.aggregate.position == i;
                add(id, "range_restriction",
                    agg ? fmt::format("aggregate input '{}' is not bound by a positive body atom", v)
                        : fmt::format("head variable '{}' does not appear in a positive body atom", v));
            }
        }

        for (const auto& b : r.body) {
            if (b.role == AtomRole::comparison) {
                for (const auto& t : b.args)
                    for (const auto& v : vars_of(t))
                        if (!bound.count(v))
                            add(id, "unbound_comparison", fmt::format("'{}' in '{}' is unbound", v, print_atom(b)));
                continue;
            }
            if (b.role == AtomRole::function) {
                const UdfDecl* u = p_.find_udf(b.predicate);
                if (!u) continue;
                for (std::size_t i = 0; i < std::min(u->input_arity, b.args.size()); ++i)
                    for (const auto& v : vars_of(b.args[i]))
                        if (!bound.count(v))
                            add(id, "unbound_function_input",
                                fmt::format("input '{}' of '{}' is unbound", v, b.predicate));
                if (b.negated)
                    for (const auto& t : b.args)
                        for (const auto& v : vars_of(t))
                            if (!bound.count(v))
                                add(id, "unsafe_negation", fmt::format("'{}' in '{}' is unbound", v, print_atom(b)));
                continue;
            }
            if (b.negated) {
                for (const auto& t : b.args)
                    for (const auto& v : vars_of(t))
                        if (!bound.count(v))
                            add(id, "unsafe_negation", fmt::format("'{}' in '{}' is unbound", v, print_atom(b)));
                for (const auto& t : b.args)
                    if (has_set_term(t)) add(id, "set_in_negation", "set-valued terms cannot appear under negation");
            }
        }

        check_temporal(r, id);
    }

    // The temporal variable must occupy the first argument of every temporal
    // predicate in the rule.
    void check_temporal(const Rule& r, const std::string& id) {
        std::set<std::string> vars;
        auto inspect = [&](const Atom& a, const HeadAggregate* agg) {
            if (!info_.is_temporal(a.predicate) || a.args.empty()) return;
            if (agg && agg->present && agg->position == 0) {
                add(id, "temporal_argument", fmt::format("'{}' has an aggregate in its temporal position", a.predicate));
                return;
            }
            const Term& t = a.args[0];
            if (t.is_variable()) vars.insert(t.name);
            else if (!(t.is_constant() && t.value.is_int() && t.value.as_int() >= 0))
                add(id, "temporal_argument",
                    fmt::format("temporal argument of '{}' must be a variable or a non-negative integer", a.predicate));
        };
        inspect(r.head, &r.aggregate);
        for (const auto& b : r.body)
            if (b.role == AtomRole::intensional) inspect(b, nullptr);
        if (vars.size() > 1)
            add(id, "temporal_argument",
                fmt::format("temporal predicates disagree on the temporal variable ({})", fmt::join(vars, ", ")));
    }

    const Program& p_;
    ProgramInfo info_;
    ValidationReport report_;
};

}  // namespace

ValidationReport validate(const Program& p) { return Validator(p).run(); }

}  // namespace dlflow::datalog
