#pragma once

#include <set>
#include <string>

#include "dlflow/datalog/ast.hpp"

namespace dlflow::datalog {

/// Recursion and temporal structure of a program.
struct ProgramInfo {
    /// IDB predicates on a dependency cycle.
    std::set<std::string> recursive;
    /// Recursive predicates whose first argument is the temporal argument.
    std::set<std::string> temporal;
    /// Recursive predicates without a temporal argument (e.g. maxVertexJ,
    /// local). They are read at the current state of the rule using them.
    std::set<std::string> views;

    bool is_recursive(const std::string& p) const { return recursive.count(p) > 0; }
    bool is_temporal(const std::string& p) const { return temporal.count(p) > 0; }
    bool is_view(const std::string& p) const { return views.count(p) > 0; }
};

ProgramInfo analyze_program(const Program& p);

/// Fills Rule::temporal for every rule from the program's recursive structure.
void annotate_temporal(Program& p);

/// True when `a` carries the rule's temporal argument in first position:
/// a temporal predicate, or a function atom whose first input is the
/// rule's temporal variable (e.g. update(J, ...)).
bool carries_temporal_argument(const Atom& a, const Rule& r, const ProgramInfo& info);

/// Variables bound by positive relational atoms and by function outputs whose
/// inputs are bound, computed to a fixpoint.
std::set<std::string> bound_variables(const Rule& r, const Program& p);

}  // namespace dlflow::datalog
