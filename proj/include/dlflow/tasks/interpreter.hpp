#pragma once

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlflow/datalog/ast.hpp"
#include "dlflow/runtime/udf.hpp"
#include "dlflow/value.hpp"

namespace dlflow::tasks {

class LimitExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct InterpretLimits {
    int max_iters = 1000;
    double float_tolerance = 0.0;
};

struct Interpretation {
    /// Every derived fact; temporal predicates keep the state number as their
    /// first column, so each iteration's contents remain visible.
    std::map<std::string, std::set<Tuple>> facts;
    /// Step iterations fired, counting the final one that derived nothing.
    int iterations = 0;
};

/// Naive bottom-up evaluation with set semantics: init rules once, then the
/// step rules once per iteration in schedule order until an iteration adds
/// no fact outside the views. Throws strat::IllFormedProgram for programs
/// that are not XY-stratified and LimitExceeded past max_iters.
Interpretation interpret_program(const datalog::Program& p, const std::map<std::string, std::vector<Tuple>>& edb,
                                 const runtime::UdfRegistry& udfs, const InterpretLimits& limits = {});

}  // namespace dlflow::tasks
