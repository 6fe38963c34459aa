#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace dlflow {

class Value;

using DenseVector = std::vector<double>;
using ValueList = std::vector<Value>;

/// A dynamically typed scalar or payload flowing through programs, plans and
/// datasets. Vectors and lists are the opaque payloads carried for UDFs (vertex
/// states, messages, models); they are immutable and shared on copy.
class Value {
public:
    enum class Kind : std::uint8_t { null, boolean, integer, real, string, vector, list };

    Value() = default;
    Value(bool b) : v_(b) {}
    Value(std::int64_t i) : v_(i) {}
    Value(int i) : v_(static_cast<std::int64_t>(i)) {}
    Value(std::uint64_t i) : v_(static_cast<std::int64_t>(i)) {}
    Value(double d) : v_(d) {}
    Value(std::string s) : v_(std::move(s)) {}
    Value(const char* s) : v_(std::string(s)) {}
    Value(DenseVector vec) : v_(std::make_shared<const DenseVector>(std::move(vec))) {}
    Value(ValueList list) : v_(std::make_shared<const ValueList>(std::move(list))) {}

    static Value null() { return Value(); }

    Kind kind() const { return static_cast<Kind>(v_.index()); }
    bool is_null() const { return kind() == Kind::null; }
    bool is_bool() const { return kind() == Kind::boolean; }
    bool is_int() const { return kind() == Kind::integer; }
    bool is_real() const { return kind() == Kind::real; }
    bool is_string() const { return kind() == Kind::string; }
    bool is_vector() const { return kind() == Kind::vector; }
    bool is_list() const { return kind() == Kind::list; }

    bool as_bool() const { return get<bool>("boolean"); }
    std::int64_t as_int() const { return get<std::int64_t>("integer"); }
    double as_real() const { return get<double>("real"); }
    /// Integer or real, widened to double.
    double as_number() const;
    const std::string& as_string() const { return get<std::string>("string"); }
    const DenseVector& as_vector() const { return *get<VecPtr>("vector"); }
    const ValueList& as_list() const { return *get<ListPtr>("list"); }

    /// Total order: first by kind, then by content. Reals order NaN last.
    friend std::strong_ordering operator<=>(const Value& a, const Value& b);
    friend bool operator==(const Value& a, const Value& b);

    std::size_t hash() const;

    /// Size of the binary encoding; used for byte metrics and spill budgets.
    std::size_t encoded_size() const;
    void encode(std::string& out) const;
    /// Decodes one value from the front of `in`, advancing it.
    static Value decode(std::string_view& in);

    std::string to_string() const;

private:
    using VecPtr = std::shared_ptr<const DenseVector>;
    using ListPtr = std::shared_ptr<const ValueList>;

    template <typename T>
    const T& get(const char* what) const {
        if (const T* p = std::get_if<T>(&v_)) return *p;
        throw std::logic_error(std::string("value is not a ") + what + ": " + to_string());
    }

    std::variant<std::monostate, bool, std::int64_t, double, std::string, VecPtr, ListPtr> v_;
};

const char* kind_name(Value::Kind k);

using Tuple = std::vector<Value>;

std::size_t hash_tuple(const Tuple& t);
std::size_t hash_columns(const Tuple& t, const std::vector<int>& cols);
std::size_t encoded_size(const Tuple& t);
void encode_tuple(const Tuple& t, std::string& out);
Tuple decode_tuple(std::string_view& in);
std::string tuple_to_string(const Tuple& t);

struct TupleHash {
    std::size_t operator()(const Tuple& t) const { return hash_tuple(t); }
};

struct ValueHash {
    std::size_t operator()(const Value& v) const { return v.hash(); }
};

}  // namespace dlflow
