#include "dlflow/datalog/ast.hpp"

#include <algorithm>

namespace dlflow::datalog {

Term Term::variable(std::string name, int offset) {
    Term t;
    t.kind = Kind::variable;
    t.name = std::move(name);
    t.offset = offset;
    return t;
}

Term Term::constant(Value v, std::string spelling) {
    Term t;
    t.kind = Kind::constant;
    t.value = std::move(v);
    t.name = std::move(spelling);
    return t;
}

Term Term::wildcard() { return Term(); }

Term Term::set_of(Term inner) {
    Term t;
    t.kind = Kind::set_of;
    t.items.push_back(std::move(inner));
    return t;
}

Term Term::tuple_of(std::vector<Term> items) {
    Term t;
    t.kind = Kind::tuple_of;
    t.items = std::move(items);
    return t;
}

void Term::collect_variables(std::vector<std::string>& out) const {
    if (kind == Kind::variable) {
        if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
        return;
    }
    for (const auto& i : items) i.collect_variables(out);
}

std::string Rule::id(std::size_t index) const {
    return label.empty() ? "rule#" + std::to_string(index + 1) : label;
}

const UdfDecl* Program::find_udf(const std::string& name) const {
    for (const auto& u : udf_decls)
        if (u.name == name) return &u;
    return nullptr;
}

const EdbDecl* Program::find_edb(const std::string& name) const {
    for (const auto& e : edb_decls)
        if (e.name == name) return &e;
    return nullptr;
}

bool Program::is_constant_symbol(const std::string& name) const {
    return std::find(constants.begin(), constants.end(), name) != constants.end();
}

std::vector<std::string> Program::idb_predicates() const {
    std::vector<std::string> out;
    for (const auto& r : rules)
        if (std::find(out.begin(), out.end(), r.head.predicate) == out.end()) out.push_back(r.head.predicate);
    return out;
}

bool is_builtin_aggregate(const std::string& name) {
    return name == "max" || name == "min" || name == "sum" || name == "count" || name == "list_append";
}

bool is_comparison_operator(const std::string& op) {
    return op == "!=" || op == "==" || op == "<" || op == "<=" || op == ">" || op == ">=";
}

}  // namespace dlflow::datalog
