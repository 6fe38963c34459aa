#include <stdexcept>

#include "dlflow/datalog/analysis.hpp"
#include "dlflow/logical/plan.hpp"
#include "dlflow/strat/strat.hpp"
#include "dlflow/tasks/registry.hpp"
#include "dlflow/tasks/templates.hpp"

namespace dlflow::tasks {

const std::vector<TaskInfo>& task_list() {
    static const std::vector<TaskInfo> tasks{
        {"bgd-logistic", "imru", "batch gradient descent for L2-regularized logistic regression"},
        {"pagerank", "pregel", "PageRank with uniform redistribution of dangling mass"},
    };
    return tasks;
}

const TaskInfo& find_task(const std::string& name) {
    for (const auto& t : task_list())
        if (t.name == name) return t;
    std::string known;
    for (const auto& t : task_list()) known += (known.empty() ? "" : ", ") + t.name;
    throw std::invalid_argument("unknown task '" + name + "' (known: " + known + ")");
}

datalog::Program task_program(const TaskInfo& t) { return t.template_name == "pregel" ? pregel_program() : imru_program(); }

physical::PhysicalPlan plan_program(const datalog::Program& p, const physical::ClusterConfig& cfg) {
    cfg.check();
    datalog::Program q = p;
    datalog::annotate_temporal(q);
    const strat::XYVerdict v = strat::check_xy(q);
    if (!v.stratified) throw strat::IllFormedProgram(v.reason);
    return physical::optimize(logical::compile_logical(q, v), cfg, q);
}

}  // namespace dlflow::tasks
