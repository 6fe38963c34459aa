#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dlflow/physical/plan.hpp"
#include "dlflow/runtime/dataset.hpp"
#include "dlflow/runtime/exchange.hpp"
#include "dlflow/runtime/udf.hpp"
#include "dlflow/runtime/vertex_store.hpp"

namespace dlflow::runtime::detail {

using UdfCalls = std::map<std::string, std::uint64_t>;

/// Projection items compiled against an input schema.
class Mapper {
public:
    Mapper() = default;
    Mapper(const std::vector<logical::ProjectionItem>& items, const std::vector<std::string>& schema);

    bool identity() const { return identity_; }
    template <typename F>
    void apply(const Tuple& t, F&& emit) const {
        if (identity_) {
            emit(t);
            return;
        }
        expand(t, 0, Tuple{}, emit);
    }

private:
    struct Item {
        logical::ProjectionItem::Kind kind;
        int source = -1;
        Value constant;
        std::size_t width = 1;
    };

    template <typename F>
    void expand(const Tuple& t, std::size_t i, Tuple cur, F& emit) const {
        for (; i < items_.size(); ++i) {
            const Item& it = items_[i];
            if (it.kind == logical::ProjectionItem::Kind::column) {
                cur.push_back(t[static_cast<std::size_t>(it.source)]);
            } else if (it.kind == logical::ProjectionItem::Kind::constant) {
                cur.push_back(it.constant);
            } else {
                for (const Value& e : elements(t[static_cast<std::size_t>(it.source)])) {
                    Tuple next = cur;
                    spread(e, it.width, next);
                    expand(t, i + 1, std::move(next), emit);
                }
                return;
            }
        }
        emit(cur);
    }

    static const ValueList& elements(const Value& v);
    static void spread(const Value& e, std::size_t width, Tuple& out);

    bool identity_ = true;
    std::vector<Item> items_;
};

struct KernelIO {
    const Stream* main = nullptr;
    const Stream* right = nullptr;
    const std::vector<Tuple>* side = nullptr;
    int partition = 0;
    std::int64_t iteration = 0;
    UdfCalls* calls = nullptr;
    SpillableRun* out = nullptr;
};

/// One physical operator resolved against its input schemas; run() handles a
/// single partition and may be called concurrently for different ones.
class Kernel {
public:
    Kernel(const physical::PhysicalOperator& op, const std::vector<std::string>& main_schema,
           const std::vector<std::string>& right_schema, const std::vector<std::string>& side_schema,
           const UdfRegistry& udfs, VertexStore* store, double tolerance);

    void run(const KernelIO& io) const;

private:
    template <typename F>
    void for_each_input(const KernelIO& io, F&& f) const {
        if (!io.main) return;
        for (const auto& r : *io.main) r->for_each([&](const Tuple& t) { map_.apply(t, f); });
    }
    template <typename F>
    auto guarded(const KernelIO& io, const std::string& what, F&& f) const -> decltype(f());
    [[noreturn]] void violation(const KernelIO& io, const std::string& msg) const;
    Value operand(const logical::Operand& o, int pos, const Tuple& t, std::int64_t j) const;
    static std::vector<std::string> concat_names(const std::vector<std::string>& a,
                                                 const std::vector<std::string>& b);
    void emit_projected(const Tuple& full, SpillableRun& out) const;
    void call_function(const KernelIO& io, const Tuple& combined) const;

    void run_sort(const KernelIO& io) const;
    void run_group(const KernelIO& io) const;
    void run_hash_join(const KernelIO& io) const;
    void run_index_join(const KernelIO& io) const;

    const physical::PhysicalOperator& op_;
    const UdfRegistry& udfs_;
    VertexStore* store_;
    double tol_;
    Mapper map_;
    std::vector<std::string> in_schema_;  // after the input map
    // Columns visible to operands and output lookups: the input (with side or
    // right columns) followed by any UDF outputs.
    std::vector<std::string> avail_;
    std::vector<int> out_pos_;
    bool out_identity_ = false;
    std::size_t fn_outputs_ = 0;
    std::vector<int> keys_;
    Mapper items_;
    // Group-bys: per output column, the input column or -1 for the aggregate.
    std::vector<int> group_out_;
    int over_ = -1;
    std::vector<int> right_keys_;
    // Operand columns in avail_, -1 for constants and J.
    std::vector<int> arg_pos_;
    int lhs_pos_ = -1;
    int rhs_pos_ = -1;
    const FunctionFn* fn_ = nullptr;
    const AggregateFns* agg_ = nullptr;
};

std::vector<int> positions_in(const std::vector<std::string>& names, const std::vector<std::string>& schema,
                              const std::string& what);

}  // namespace dlflow::runtime::detail
