#include "dlflow/tasks/templates.hpp"

#include "dlflow/datalog/parser.hpp"
#include "template_text.hpp"

namespace dlflow::tasks {

std::string_view pregel_template_text() { return generated::pregel_dl; }
std::string_view imru_template_text() { return generated::imru_dl; }

datalog::Program pregel_program() { return datalog::parse_program(pregel_template_text()); }
datalog::Program imru_program() { return datalog::parse_program(imru_template_text()); }

}  // namespace dlflow::tasks
