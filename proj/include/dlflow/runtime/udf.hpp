#pragma once

#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlflow/value.hpp"

namespace dlflow::runtime {

/// A function predicate: input arguments in, zero or more output tuples out
/// (each of the declared output arity).
using FunctionFn = std::function<std::vector<Tuple>(const Tuple& args)>;

/// An aggregate in lift / merge / finalize form. Partial phases carry lifted
/// states between partitions; only the closing phase finalizes.
struct AggregateFns {
    std::function<Value(const Value&)> lift;
    std::function<Value(const Value&, const Value&)> merge;
    std::function<Value(const Value&)> finalize;
    bool commutative = false;
};

/// Task-defined equality for payload values (models, states) used by = and
/// != comparisons when both sides are vectors or both are lists.
using EqualityFn = std::function<bool(const Value&, const Value&)>;

class UdfRegistry {
public:
    /// Starts with the builtin aggregates max, min, sum and count.
    UdfRegistry();

    void add_function(const std::string& name, FunctionFn fn);
    void add_aggregate(const std::string& name, AggregateFns fns);
    void set_equality(EqualityFn fn) { equality_ = std::move(fn); }

    bool has_function(const std::string& name) const { return functions_.count(name) > 0; }
    bool has_aggregate(const std::string& name) const { return aggregates_.count(name) > 0; }
    /// Throws std::out_of_range naming the missing UDF.
    const FunctionFn& function(const std::string& name) const;
    const AggregateFns& aggregate(const std::string& name) const;
    bool has_equality() const { return static_cast<bool>(equality_); }
    /// Payload equality through the task hook, plain equality otherwise.
    bool values_equal(const Value& a, const Value& b, double tolerance = 0.0) const;

private:
    std::map<std::string, FunctionFn> functions_;
    std::map<std::string, AggregateFns> aggregates_;
    EqualityFn equality_;
};

/// A UDF threw; the message names the operator and iteration.
class UdfError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A declared stream property (order, partitioning, key uniqueness) does not
/// hold at run time.
class PropertyViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dlflow::runtime
