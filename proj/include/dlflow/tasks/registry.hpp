#pragma once

#include <string>
#include <vector>

#include "dlflow/datalog/ast.hpp"
#include "dlflow/physical/plan.hpp"

namespace dlflow::tasks {

/// A shipped task: its template program and the aggregate it reduces with.
struct TaskInfo {
    std::string name;
    std::string template_name;
    std::string description;
};

/// Registered tasks in name order: `bgd-logistic` and `pagerank`.
const std::vector<TaskInfo>& task_list();
/// Throws std::invalid_argument naming the known tasks when absent.
const TaskInfo& find_task(const std::string& name);
/// Template program of a task.
datalog::Program task_program(const TaskInfo& t);

/// Stratification check, logical compile and physical optimization in one
/// call. Throws strat::IllFormedProgram when the program is rejected.
physical::PhysicalPlan plan_program(const datalog::Program& p, const physical::ClusterConfig& cfg);

}  // namespace dlflow::tasks
