#include "dlflow/datalog/printer.hpp"

#include <cmath>

#include <fmt/format.h>

namespace dlflow::datalog {

namespace {

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out.push_back(c);
        }
    }
    return out + "\"";
}

std::string print_constant(const Term& t) {
    if (!t.name.empty()) return t.name;
    const Value& v = t.value;
    switch (v.kind()) {
        case Value::Kind::string: return quote(v.as_string());
        case Value::Kind::real: {
            const double d = v.as_real();
            if (!std::isfinite(d)) throw std::invalid_argument("non-finite constants have no source form");
            std::string s = fmt::format("{}", d);
            if (s.find_first_of(".e") == std::string::npos) s += ".0";
            return s;
        }
        case Value::Kind::null:
        case Value::Kind::boolean:
        case Value::Kind::integer: return v.to_string();
        default: throw std::invalid_argument("blob constants have no source form: " + v.to_string());
    }
}

}  // namespace

std::string print_term(const Term& t) {
    switch (t.kind) {
        case Term::Kind::variable: return t.offset ? fmt::format("{}+{}", t.name, t.offset) : t.name;
        case Term::Kind::constant: return print_constant(t);
        case Term::Kind::wildcard: return "_";
        case Term::Kind::set_of: return "{" + print_term(t.items.at(0)) + "}";
        case Term::Kind::tuple_of: {
            std::string s = "(";
            for (std::size_t i = 0; i < t.items.size(); ++i) s += (i ? ", " : "") + print_term(t.items[i]);
            return s + ")";
        }
    }
    return "?";
}

std::string print_atom(const Atom& a, const HeadAggregate* agg) {
    if (a.role == AtomRole::comparison)
        return fmt::format("{} {} {}", print_term(a.args.at(0)), a.predicate, print_term(a.args.at(1)));
    std::string s = a.negated ? "!" + a.predicate : a.predicate;
    if (a.args.empty()) return s;
    s += "(";
    for (std::size_t i = 0; i < a.args.size(); ++i) {
        if (i) s += ", ";
        if (agg && agg->present && agg->position == i) s += fmt::format("{}<{}>", agg->name, print_term(agg->over));
        else s += print_term(a.args[i]);
    }
    return s + ")";
}

std::string print_rule(const Rule& r) {
    std::string s = r.label.empty() ? "" : r.label + ": ";
    s += print_atom(r.head, &r.aggregate);
    if (!r.body.empty()) {
        s += " :- ";
        for (std::size_t i = 0; i < r.body.size(); ++i) s += (i ? ", " : "") + print_atom(r.body[i]);
    }
    return s + ".";
}

std::string print_rules(const Program& p) {
    std::string s;
    for (const auto& r : p.rules) s += print_rule(r) + "\n";
    return s;
}

std::string print_program(const Program& p) {
    std::string s;
    for (const auto& e : p.edb_decls) s += fmt::format(".decl {}/{}\n", e.name, e.arity);
    for (const auto& u : p.udf_decls) {
        if (u.is_aggregate) s += fmt::format(".aggregate {}{}\n", u.name, u.is_commutative_associative ? " commutative" : "");
        else s += fmt::format(".udf {}/{} -> {}\n", u.name, u.input_arity, u.output_arity);
    }
    for (const auto& c : p.constants) s += fmt::format(".const {}\n", c);
    return s + print_rules(p);
}

}  // namespace dlflow::datalog
