#include "dlflow/value.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include <fmt/format.h>

namespace dlflow {

namespace {

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t combine(std::uint64_t seed, std::uint64_t v) {
    return mix(seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

std::uint64_t hash_double(double d) {
    if (d == 0.0) d = 0.0;  // fold -0.0 onto 0.0, they compare equal
    if (std::isnan(d)) return 0x7ff8000000000000ULL;
    return std::bit_cast<std::uint64_t>(d);
}

std::strong_ordering compare_double(double a, double b) {
    const bool na = std::isnan(a), nb = std::isnan(b);
    if (na || nb) return na == nb ? std::strong_ordering::equal
                       : na       ? std::strong_ordering::greater
                                  : std::strong_ordering::less;
    if (a < b) return std::strong_ordering::less;
    if (a > b) return std::strong_ordering::greater;
    return std::strong_ordering::equal;
}

void put_varint(std::string& out, std::uint64_t v) {
    while (v >= 0x80) {
        out.push_back(static_cast<char>((v & 0x7f) | 0x80));
        v >>= 7;
    }
    out.push_back(static_cast<char>(v));
}

std::size_t varint_size(std::uint64_t v) {
    std::size_t n = 1;
    while (v >= 0x80) {
        v >>= 7;
        ++n;
    }
    return n;
}

std::uint64_t get_varint(std::string_view& in) {
    std::uint64_t v = 0;
    int shift = 0;
    while (true) {
        if (in.empty() || shift > 63) throw std::runtime_error("truncated varint");
        auto b = static_cast<unsigned char>(in.front());
        in.remove_prefix(1);
        v |= static_cast<std::uint64_t>(b & 0x7f) << shift;
        if (!(b & 0x80)) return v;
        shift += 7;
    }
}

void put_u64(std::string& out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.append(buf, 8);
}

std::uint64_t get_u64(std::string_view& in) {
    if (in.size() < 8) throw std::runtime_error("truncated value");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[i])) << (8 * i);
    in.remove_prefix(8);
    return v;
}

std::string format_double(double d) {
    std::string s = fmt::format("{}", d);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

}  // namespace

const char* kind_name(Value::Kind k) {
    switch (k) {
        case Value::Kind::null: return "null";
        case Value::Kind::boolean: return "bool";
        case Value::Kind::integer: return "int";
        case Value::Kind::real: return "float";
        case Value::Kind::string: return "string";
        case Value::Kind::vector: return "vector";
        case Value::Kind::list: return "list";
    }
    return "?";
}

double Value::as_number() const {
    if (is_int()) return static_cast<double>(as_int());
    return as_real();
}

std::strong_ordering operator<=>(const Value& a, const Value& b) {
    if (a.kind() != b.kind()) return a.kind() <=> b.kind();
    switch (a.kind()) {
        case Value::Kind::null: return std::strong_ordering::equal;
        case Value::Kind::boolean: return a.as_bool() <=> b.as_bool();
        case Value::Kind::integer: return a.as_int() <=> b.as_int();
        case Value::Kind::real: return compare_double(a.as_real(), b.as_real());
        case Value::Kind::string: return a.as_string().compare(b.as_string()) <=> 0;
        case Value::Kind::vector: {
            const auto& x = a.as_vector();
            const auto& y = b.as_vector();
            if (&x == &y) return std::strong_ordering::equal;
            const std::size_t n = std::min(x.size(), y.size());
            for (std::size_t i = 0; i < n; ++i)
                if (auto c = compare_double(x[i], y[i]); c != 0) return c;
            return x.size() <=> y.size();
        }
        case Value::Kind::list: {
            const auto& x = a.as_list();
            const auto& y = b.as_list();
            if (&x == &y) return std::strong_ordering::equal;
            const std::size_t n = std::min(x.size(), y.size());
            for (std::size_t i = 0; i < n; ++i)
                if (auto c = x[i] <=> y[i]; c != 0) return c;
            return x.size() <=> y.size();
        }
    }
    return std::strong_ordering::equal;
}

bool operator==(const Value& a, const Value& b) { return (a <=> b) == 0; }

std::size_t Value::hash() const {
    std::uint64_t h = mix(static_cast<std::uint64_t>(kind()) + 1);
    switch (kind()) {
        case Kind::null: break;
        case Kind::boolean: h = combine(h, as_bool()); break;
        case Kind::integer: h = combine(h, static_cast<std::uint64_t>(as_int())); break;
        case Kind::real: h = combine(h, hash_double(as_real())); break;
        case Kind::string:
            for (unsigned char c : as_string()) h = combine(h, c);
            break;
        case Kind::vector:
            for (double d : as_vector()) h = combine(h, hash_double(d));
            break;
        case Kind::list:
            for (const auto& v : as_list()) h = combine(h, v.hash());
            break;
    }
    return static_cast<std::size_t>(h);
}

std::size_t Value::encoded_size() const {
    switch (kind()) {
        case Kind::null: return 1;
        case Kind::boolean: return 2;
        case Kind::integer:
        case Kind::real: return 9;
        case Kind::string: return 1 + varint_size(as_string().size()) + as_string().size();
        case Kind::vector: return 1 + varint_size(as_vector().size()) + 8 * as_vector().size();
        case Kind::list: {
            std::size_t n = 1 + varint_size(as_list().size());
            for (const auto& v : as_list()) n += v.encoded_size();
            return n;
        }
    }
    return 1;
}

void Value::encode(std::string& out) const {
    out.push_back(static_cast<char>(kind()));
    switch (kind()) {
        case Kind::null: break;
        case Kind::boolean: out.push_back(as_bool() ? 1 : 0); break;
        case Kind::integer: put_u64(out, static_cast<std::uint64_t>(as_int())); break;
        case Kind::real: put_u64(out, std::bit_cast<std::uint64_t>(as_real())); break;
        case Kind::string:
            put_varint(out, as_string().size());
            out.append(as_string());
            break;
        case Kind::vector:
            put_varint(out, as_vector().size());
            for (double d : as_vector()) put_u64(out, std::bit_cast<std::uint64_t>(d));
            break;
        case Kind::list:
            put_varint(out, as_list().size());
            for (const auto& v : as_list()) v.encode(out);
            break;
    }
}

Value Value::decode(std::string_view& in) {
    if (in.empty()) throw std::runtime_error("truncated value");
    auto tag = static_cast<unsigned char>(in.front());
    in.remove_prefix(1);
    switch (static_cast<Kind>(tag)) {
        case Kind::null: return Value();
        case Kind::boolean: {
            if (in.empty()) throw std::runtime_error("truncated value");
            bool b = in.front() != 0;
            in.remove_prefix(1);
            return Value(b);
        }
        case Kind::integer: return Value(static_cast<std::int64_t>(get_u64(in)));
        case Kind::real: return Value(std::bit_cast<double>(get_u64(in)));
        case Kind::string: {
            auto n = get_varint(in);
            if (in.size() < n) throw std::runtime_error("truncated string");
            std::string s(in.substr(0, n));
            in.remove_prefix(n);
            return Value(std::move(s));
        }
        case Kind::vector: {
            auto n = get_varint(in);
            DenseVector v;
            v.reserve(n);
            for (std::uint64_t i = 0; i < n; ++i) v.push_back(std::bit_cast<double>(get_u64(in)));
            return Value(std::move(v));
        }
        case Kind::list: {
            auto n = get_varint(in);
            ValueList l;
            l.reserve(n);
            for (std::uint64_t i = 0; i < n; ++i) l.push_back(decode(in));
            return Value(std::move(l));
        }
    }
    throw std::runtime_error(fmt::format("bad value tag {}", tag));
}

std::string Value::to_string() const {
    switch (kind()) {
        case Kind::null: return "null";
        case Kind::boolean: return as_bool() ? "true" : "false";
        case Kind::integer: return std::to_string(as_int());
        case Kind::real: return format_double(as_real());
        case Kind::string: return as_string();
        case Kind::vector: {
            std::string s = "<";
            const auto& v = as_vector();
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (i) s += ", ";
                s += format_double(v[i]);
            }
            return s + ">";
        }
        case Kind::list: {
            std::string s = "[";
            const auto& l = as_list();
            for (std::size_t i = 0; i < l.size(); ++i) {
                if (i) s += ", ";
                s += l[i].to_string();
            }
            return s + "]";
        }
    }
    return "?";
}

std::size_t hash_tuple(const Tuple& t) {
    std::uint64_t h = 0x51ed270b27a5f3c1ULL;
    for (const auto& v : t) h = combine(h, v.hash());
    return static_cast<std::size_t>(h);
}

std::size_t hash_columns(const Tuple& t, const std::vector<int>& cols) {
    std::uint64_t h = 0x51ed270b27a5f3c1ULL;
    for (int c : cols) h = combine(h, t.at(static_cast<std::size_t>(c)).hash());
    return static_cast<std::size_t>(h);
}

std::size_t encoded_size(const Tuple& t) {
    std::size_t n = varint_size(t.size());
    for (const auto& v : t) n += v.encoded_size();
    return n;
}

void encode_tuple(const Tuple& t, std::string& out) {
    put_varint(out, t.size());
    for (const auto& v : t) v.encode(out);
}

Tuple decode_tuple(std::string_view& in) {
    auto n = get_varint(in);
    Tuple t;
    t.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) t.push_back(Value::decode(in));
    return t;
}

std::string tuple_to_string(const Tuple& t) {
    std::string s = "(";
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (i) s += ", ";
        s += t[i].to_string();
    }
    return s + ")";
}

}  // namespace dlflow
