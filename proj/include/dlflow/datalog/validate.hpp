#pragma once

#include <string>
#include <vector>

#include "dlflow/datalog/ast.hpp"

namespace dlflow::datalog {

struct Violation {
    /// Rule id (label or rule#n); empty for program-level violations.
    std::string rule;
    /// Short machine-readable category, e.g. "range_restriction".
    std::string kind;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
    bool has(const std::string& kind) const;
    std::string to_string() const;
};

ValidationReport validate(const Program& p);

}  // namespace dlflow::datalog
