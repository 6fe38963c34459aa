#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "dlflow/datalog/ast.hpp"

namespace dlflow::datalog {

class ParseError : public std::runtime_error {
public:
    ParseError(int line, int column, const std::string& message);
    int line() const { return line_; }
    int column() const { return column_; }
    /// Message without the location prefix.
    const std::string& detail() const { return detail_; }

private:
    int line_;
    int column_;
    std::string detail_;
};

/// Parses a program in the concrete grammar:
///
///     % comment
///     .decl data/2                      extensional predicate
///     .udf update/4 -> 2                function predicate: inputs -> outputs
///     .aggregate combine commutative    aggregate UDF usable as combine<X>
///     .const ACTIVATION_MSG             upper-case symbol treated as a constant
///     L3: collect(J, Id, combine<Msg>) :- send(J, Id, Msg).
///
/// Rule labels are optional. Negation is `!atom`, comparisons are infix
/// (`!= == < <= > >=`), `J+1` is the only successor form, `{T}` unnests a
/// set-valued argument and `(A, B)` is a tuple term. Temporal annotations are
/// inferred before returning (see annotate_temporal).
Program parse_program(std::string_view text);

}  // namespace dlflow::datalog
