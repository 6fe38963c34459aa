#include <cmath>

#include "dlflow/runtime/udf.hpp"

namespace dlflow::runtime {

namespace {

Value identity(const Value& v) { return v; }

Value add(const Value& a, const Value& b) {
    if (a.is_int() && b.is_int()) return Value(a.as_int() + b.as_int());
    return Value(a.as_number() + b.as_number());
}

}  // namespace

UdfRegistry::UdfRegistry() {
    aggregates_["max"] = {identity, [](const Value& a, const Value& b) { return a < b ? b : a; }, identity, true};
    aggregates_["min"] = {identity, [](const Value& a, const Value& b) { return b < a ? b : a; }, identity, true};
    aggregates_["sum"] = {identity, add, identity, true};
    aggregates_["count"] = {[](const Value&) { return Value(std::int64_t{1}); }, add, identity, true};
}

void UdfRegistry::add_function(const std::string& name, FunctionFn fn) { functions_[name] = std::move(fn); }

void UdfRegistry::add_aggregate(const std::string& name, AggregateFns fns) { aggregates_[name] = std::move(fns); }

const FunctionFn& UdfRegistry::function(const std::string& name) const {
    auto it = functions_.find(name);
    if (it == functions_.end()) throw std::out_of_range("no function UDF registered as '" + name + "'");
    return it->second;
}

const AggregateFns& UdfRegistry::aggregate(const std::string& name) const {
    auto it = aggregates_.find(name);
    if (it == aggregates_.end()) throw std::out_of_range("no aggregate UDF registered as '" + name + "'");
    return it->second;
}

bool UdfRegistry::values_equal(const Value& a, const Value& b, double tolerance) const {
    const bool payload = (a.is_vector() && b.is_vector()) || (a.is_list() && b.is_list());
    if (payload && equality_) return equality_(a, b);
    if (a.is_vector() && b.is_vector() && tolerance > 0.0) {
        const auto& x = a.as_vector();
        const auto& y = b.as_vector();
        if (x.size() != y.size()) return false;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (!(std::fabs(x[i] - y[i]) <= tolerance)) return false;
        return true;
    }
    return a == b;
}

}  // namespace dlflow::runtime
