#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlflow/datalog/ast.hpp"

namespace dlflow::strat {

using datalog::Program;

enum class EdgeKind { positive, negated, aggregated };

const char* edge_kind_name(EdgeKind k);

struct DepEdge {
    std::string from;
    std::string to;
    EdgeKind kind = EdgeKind::positive;
    friend bool operator==(const DepEdge&, const DepEdge&) = default;
};

/// Predicate dependency graph. Nodes are every relational and function
/// predicate of the program (comparisons excluded); an edge from -> to exists
/// when `from` occurs in the body of a rule defining `to`.
struct DependencyGraph {
    std::vector<std::string> nodes;
    std::vector<DepEdge> edges;

    bool has_node(const std::string& n) const;
    bool has_edge(const std::string& from, const std::string& to) const;
    bool has_edge(const std::string& from, const std::string& to, EdgeKind kind) const;
    int node_index(const std::string& n) const;
};

DependencyGraph build_dependency_graph(const Program& p);

struct RuleClass {
    enum class Tag { nonrecursive, x_rule, y_rule, ill_formed };
    Tag tag = Tag::nonrecursive;
    /// For ill-formed rules: the violated condition, e.g. "Y-rule clause 2".
    std::string clause;
    std::string reason;

    bool ok() const { return tag != Tag::ill_formed; }
};

const char* tag_name(RuleClass::Tag t);

/// One entry per rule, in program order.
std::vector<RuleClass> classify_rules(const Program& p);

/// Thrown by xy_transform on programs with ill-formed rules.
class IllFormedProgram : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Renames recursive predicates at the head's temporal state to new_*, all
/// other recursive occurrences to old_*, and drops temporal arguments.
/// Function atoms carrying the temporal argument are renamed the same way.
Program xy_transform(const Program& p);

struct Strata {
    std::map<std::string, int> assignment;
    int count = 0;
    /// Rule indices grouped by the stratum of their head, lowest first;
    /// dependency order within a stratum, ties broken by source order.
    std::vector<std::vector<std::size_t>> groups;
};

struct StratifyResult {
    std::optional<Strata> strata;
    /// On failure: predicates on a cycle through negation or aggregation,
    /// starting at the source of the offending edge.
    std::vector<std::string> cycle;

    bool ok() const { return strata.has_value(); }
};

StratifyResult stratify(const Program& p);

/// Checks the numeric stratum conditions over every edge of `g`.
bool check_strata_invariants(const DependencyGraph& g, const Strata& s, std::string* why = nullptr);

/// Rule firing order: init fires once, step fires once per iteration.
struct Schedule {
    std::vector<std::size_t> init;
    std::vector<std::size_t> step;
};

struct XYVerdict {
    bool stratified = false;
    std::vector<RuleClass> classes;
    std::optional<Program> transformed;
    std::optional<Strata> strata;
    Schedule schedule;
    std::vector<std::string> cycle;
    /// Human-readable reason for rejection.
    std::string reason;
    /// First ill-formed rule, if any.
    std::optional<std::size_t> offending_rule;
};

XYVerdict check_xy(const Program& p);

/// Structured text report used by `plan --check-strat`.
std::string format_verdict(const Program& p, const XYVerdict& v);

}  // namespace dlflow::strat
