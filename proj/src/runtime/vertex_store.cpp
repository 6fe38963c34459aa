#include <algorithm>

#include <fmt/format.h>

#include "dlflow/runtime/dataset.hpp"
#include "dlflow/runtime/udf.hpp"
#include "dlflow/runtime/vertex_store.hpp"

namespace dlflow::runtime {

VertexStore::VertexStore(std::string name, int partitions, int key_position)
    : name_(std::move(name)),
      key_(key_position),
      parts_(static_cast<std::size_t>(partitions)),
      staged_(static_cast<std::size_t>(partitions)) {
    if (partitions < 1) throw std::invalid_argument("vertex store needs at least one partition");
}

int VertexStore::owner(const Value& key) const {
    return partition_of(Tuple{key}, {0}, partitions());
}

void VertexStore::bulk_load(int p, std::vector<Tuple> sorted) {
    const auto k = static_cast<std::size_t>(key_);
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const Value& key = sorted[i].at(k);
        if (owner(key) != p)
            throw PropertyViolation(
                fmt::format("{}: key {} loaded into partition {} but owned by {}", name_, key.to_string(), p, owner(key)));
        if (i > 0 && !(sorted[i - 1].at(k) < key))
            throw PropertyViolation(fmt::format("{}: bulk load input not strictly increasing at key {}", name_,
                                                key.to_string()));
    }
    parts_.at(static_cast<std::size_t>(p)) = std::move(sorted);
}

void VertexStore::stage(int p, Tuple t) {
    const Value& key = t.at(static_cast<std::size_t>(key_));
    if (owner(key) != p)
        throw PropertyViolation(
            fmt::format("{}: update for key {} reached partition {} but is owned by {}", name_, key.to_string(), p,
                        owner(key)));
    bool all_null = true;
    for (std::size_t i = 0; i < t.size(); ++i)
        if (static_cast<int>(i) != key_ && !t[i].is_null()) all_null = false;
    if (all_null) return;
    staged_.at(static_cast<std::size_t>(p)).push_back(std::move(t));
}

std::size_t VertexStore::staged() const {
    std::size_t n = 0;
    for (const auto& s : staged_) n += s.size();
    return n;
}

void VertexStore::apply_staged() {
    const auto k = static_cast<std::size_t>(key_);
    auto less = [k](const Tuple& a, const Value& key) { return a.at(k) < key; };
    for (std::size_t p = 0; p < parts_.size(); ++p) {
        auto& part = parts_[p];
        for (auto& t : staged_[p]) {
            auto it = std::lower_bound(part.begin(), part.end(), t.at(k), less);
            if (it == part.end() || !(it->at(k) == t.at(k)))
                throw UnknownVertex(fmt::format("{}: update for unknown id {}", name_, t.at(k).to_string()));
            *it = std::move(t);
        }
        staged_[p].clear();
    }
}

void VertexStore::clear_staged() {
    for (auto& s : staged_) s.clear();
}

const Tuple* VertexStore::find(const Value& key) const {
    const auto k = static_cast<std::size_t>(key_);
    const auto& part = parts_[static_cast<std::size_t>(owner(key))];
    auto it = std::lower_bound(part.begin(), part.end(), key, [k](const Tuple& a, const Value& v) { return a.at(k) < v; });
    if (it == part.end() || !(it->at(k) == key)) return nullptr;
    return &*it;
}

std::size_t VertexStore::size() const {
    std::size_t n = 0;
    for (const auto& p : parts_) n += p.size();
    return n;
}

std::vector<Tuple> VertexStore::contents() const {
    std::vector<Tuple> out;
    out.reserve(size());
    for (const auto& p : parts_) out.insert(out.end(), p.begin(), p.end());
    return out;
}

}  // namespace dlflow::runtime
