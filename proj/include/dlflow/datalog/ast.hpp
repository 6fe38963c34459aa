#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dlflow/value.hpp"

namespace dlflow::datalog {

struct Term {
    enum class Kind { variable, constant, set_of, tuple_of, wildcard };

    Kind kind = Kind::wildcard;
    /// Variable name, or the source spelling of a symbolic constant.
    std::string name;
    /// Successor offset on a variable: `J+1` has offset 1.
    int offset = 0;
    Value value;
    std::vector<Term> items;

    static Term variable(std::string name, int offset = 0);
    static Term constant(Value v, std::string spelling = {});
    static Term wildcard();
    static Term set_of(Term inner);
    static Term tuple_of(std::vector<Term> items);

    bool is_variable() const { return kind == Kind::variable; }
    bool is_constant() const { return kind == Kind::constant; }

    /// Variables occurring anywhere in the term, in left-to-right order.
    void collect_variables(std::vector<std::string>& out) const;

    friend bool operator==(const Term&, const Term&) = default;
};

enum class AtomRole { extensional, intensional, function, comparison };

struct Atom {
    std::string predicate;
    std::vector<Term> args;
    bool negated = false;
    AtomRole role = AtomRole::intensional;

    std::size_t arity() const { return args.size(); }
    friend bool operator==(const Atom&, const Atom&) = default;
};

struct HeadAggregate {
    bool present = false;
    std::string name;
    Term over;
    /// Argument position in the head holding the aggregate.
    std::size_t position = 0;

    friend bool operator==(const HeadAggregate&, const HeadAggregate&) = default;
};

/// Temporal annotation of a rule: which variable tracks the iteration and
/// where the head sits relative to it. A head with an integer first argument
/// (`model(0, M)`) is at a constant state instead.
struct Temporal {
    std::string var;
    int head_offset = 0;
    std::optional<std::uint64_t> constant_state;
    /// True when the head carries no temporal argument while the body reads
    /// temporal predicates (views such as maxVertexJ and local).
    bool head_untimed = false;

    friend bool operator==(const Temporal&, const Temporal&) = default;
};

struct Rule {
    std::string label;
    Atom head;
    HeadAggregate aggregate;
    std::vector<Atom> body;
    std::optional<Temporal> temporal;
    int line = 0;

    /// Label if present, otherwise "rule#<index+1>".
    std::string id(std::size_t index) const;
    friend bool operator==(const Rule& a, const Rule& b) {
        return a.label == b.label && a.head == b.head && a.aggregate == b.aggregate && a.body == b.body;
    }
};

struct EdbDecl {
    std::string name;
    std::size_t arity = 0;
    friend bool operator==(const EdbDecl&, const EdbDecl&) = default;
};

struct UdfDecl {
    std::string name;
    std::size_t input_arity = 0;
    std::size_t output_arity = 0;
    bool is_aggregate = false;
    bool is_commutative_associative = false;
    friend bool operator==(const UdfDecl&, const UdfDecl&) = default;
};

struct Program {
    std::vector<Rule> rules;
    std::vector<EdbDecl> edb_decls;
    std::vector<UdfDecl> udf_decls;
    std::vector<std::string> constants;

    const UdfDecl* find_udf(const std::string& name) const;
    const EdbDecl* find_edb(const std::string& name) const;
    bool is_constant_symbol(const std::string& name) const;

    /// Predicates defined by some rule head, in first-definition order.
    std::vector<std::string> idb_predicates() const;

    friend bool operator==(const Program& a, const Program& b) {
        return a.rules == b.rules && a.edb_decls == b.edb_decls && a.udf_decls == b.udf_decls &&
               a.constants == b.constants;
    }
};

/// Aggregates known without a declaration.
bool is_builtin_aggregate(const std::string& name);
bool is_comparison_operator(const std::string& op);

}  // namespace dlflow::datalog
