#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlflow/datalog/ast.hpp"
#include "dlflow/strat/strat.hpp"

namespace dlflow::logical {

enum class OpKind { dataset, cross_product, inner_join, projection, selection, group_by, group_all, function_apply };

const char* op_kind_name(OpKind k);

/// Which state of a dataset an operator touches.
struct DatasetRef {
    enum class Version {
        none,      // extensional or nonrecursive: a single unversioned relation
        constant,  // a fixed state, e.g. vertex@0
        current,   // @J
        next,      // @J+1
        history,   // @*, every state so far with the state number as first column
    };
    std::string name;
    Version version = Version::none;
    std::uint64_t state = 0;

    std::string to_string() const;
    friend bool operator==(const DatasetRef&, const DatasetRef&) = default;
};

/// An input to a function or comparison: a column, a constant, or the
/// iteration counter J.
struct Operand {
    enum class Kind { column, constant, iteration };
    Kind kind = Kind::column;
    std::string column;
    datalog::Term constant;

    static Operand of_column(std::string c);
    static Operand of_constant(datalog::Term t);
    static Operand iteration(std::string spelling = "J");
    std::string to_string() const;
    friend bool operator==(const Operand&, const Operand&) = default;
};

struct Comparison {
    std::string op;
    Operand lhs;
    Operand rhs;
    std::string to_string() const;
    friend bool operator==(const Comparison&, const Comparison&) = default;
};

struct ProjectionItem {
    enum class Kind { column, constant, unnest };
    Kind kind = Kind::column;
    /// Output column names; one for column/constant items, one per tuple
    /// component (or one for scalar elements) for unnest items.
    std::vector<std::string> names;
    std::string source;
    datalog::Term constant;

    static ProjectionItem of_column(std::string name, std::string source);
    static ProjectionItem of_constant(std::string name, datalog::Term value);
    static ProjectionItem of_unnest(std::string source, std::vector<std::string> names);
    std::string to_string() const;
    friend bool operator==(const ProjectionItem&, const ProjectionItem&) = default;
};

struct LogicalOperator {
    int id = -1;
    OpKind kind = OpKind::dataset;
    std::vector<int> inputs;
    std::vector<std::string> schema;
    /// Rule the operator was compiled from.
    std::string rule;

    DatasetRef dataset;                  // dataset
    std::vector<std::string> keys;       // inner_join (on), group_by (keys)
    std::string udf;                     // function_apply, group_by, group_all
    std::vector<Operand> args;           // function_apply inputs
    std::string aggregate_over;          // group_by, group_all
    std::vector<ProjectionItem> items;   // projection
    Comparison predicate;                // selection

    /// A dataset operator with an input writes; without one it reads.
    bool is_write() const { return kind == OpKind::dataset && !inputs.empty(); }
    bool is_read() const { return kind == OpKind::dataset && inputs.empty(); }
    std::string label() const;
};

/// Operators of one dataflow. Ids equal positions in `ops`.
struct Dataflow {
    std::vector<LogicalOperator> ops;

    const LogicalOperator& op(int id) const { return ops.at(static_cast<std::size_t>(id)); }
    std::vector<int> consumers(int id) const;
    std::vector<int> writes() const;
};

struct Halt {
    enum class Kind { none, dataset_empty, function_udf_unchanged };
    Kind kind = Kind::none;
    /// Dataset or UDF name.
    std::string name;
    std::string to_string() const;
};

struct LogicalPlan {
    Dataflow init;
    Dataflow step;
    std::vector<std::string> recursive_datasets;
    Halt halt;
};

class UnsupportedConstruct : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Compiles an XY-stratified program following the verdict's schedule.
LogicalPlan compile_logical(const datalog::Program& p, const strat::XYVerdict& v);
/// Runs the XY check first; throws strat::IllFormedProgram when it fails.
LogicalPlan compile_logical(const datalog::Program& p);

/// Orders "L10" after "L9": digit runs compare numerically.
bool natural_less(const std::string& a, const std::string& b);

/// Positional renumbering: depth-first from the writes, inputs first.
Dataflow canonicalize(const Dataflow& df);

std::string canonical_serialize(const LogicalPlan& lp);

/// Structural problems (dangling inputs, arity, unknown columns); empty when
/// the plan is well formed.
std::vector<std::string> check_plan(const LogicalPlan& lp);

}  // namespace dlflow::logical
