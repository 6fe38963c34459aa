#pragma once

#include <string_view>

#include "dlflow/datalog/ast.hpp"

namespace dlflow::tasks {

/// Source text of the shipped template programs.
std::string_view pregel_template_text();
std::string_view imru_template_text();

datalog::Program pregel_program();
datalog::Program imru_program();

}  // namespace dlflow::tasks
