#pragma once

#include <string>

#include "dlflow/datalog/ast.hpp"

namespace dlflow::datalog {

std::string print_term(const Term& t);
std::string print_atom(const Atom& a, const HeadAggregate* agg = nullptr);
std::string print_rule(const Rule& r);

/// Declarations followed by one rule per line. Parsing the output yields an
/// equal program.
std::string print_program(const Program& p);

/// Rules only, one per line.
std::string print_rules(const Program& p);

}  // namespace dlflow::datalog
