#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

#include "dlflow/exact_sum.hpp"
#include "dlflow/tasks/pagerank.hpp"

namespace dlflow::tasks {

namespace {

constexpr double damping = 0.85;

bool is_activation(const Value& v) { return v.is_string() && v.as_string() == activation_symbol; }

// A combined message is a running sum: exact partials in deterministic mode,
// a plain double otherwise. Activation passes through untouched.
struct Combine {
    bool exact;

    Value state(double x) const { return exact ? Value(DenseVector{x}) : Value(x); }

    Value lift(const Value& m) const {
        if (is_activation(m)) return m;
        if (m.is_list()) return state(m.as_list().at(2).as_number());
        if (m.is_vector()) return m;
        return state(m.as_number());
    }

    Value merge(const Value& a, const Value& b) const {
        if (is_activation(b)) return a;
        if (is_activation(a)) return b;
        if (!exact) return Value(a.as_number() + b.as_number());
        ExactSum s(a.as_vector());
        s.merge(ExactSum(b.as_vector()));
        return Value(s.partials());
    }

    Value finalize(const Value& s) const {
        if (is_activation(s) || !exact) return s;
        return Value(ExactSum(s.as_vector()).value());
    }
};

}  // namespace

runtime::UdfRegistry pagerank_udfs(const PageRankConfig& cfg) {
    if (cfg.vertices < 1) throw std::invalid_argument("pagerank needs at least one vertex (N = 0)");
    if (cfg.supersteps < 1) throw std::invalid_argument("pagerank needs at least one superstep");
    const std::int64_t n = cfg.vertices;
    const int t = cfg.supersteps;
    const double inv_n = 1.0 / static_cast<double>(n);
    runtime::UdfRegistry r;

    r.add_function("init_vertex", [n, inv_n](const Tuple& a) -> std::vector<Tuple> {
        const std::int64_t id = a.at(0).as_int();
        if (id < 0 || id >= n) throw std::out_of_range(fmt::format("vertex id {} outside 0..{}", id, n - 1));
        for (const auto& d : a.at(1).as_list())
            if (d.as_int() < 0 || d.as_int() >= n)
                throw std::out_of_range(fmt::format("edge {} -> {} leaves the vertex range", id, d.as_int()));
        return {{Value(ValueList{Value(inv_n), Value(std::int64_t{0}), a.at(1)})}};
    });

    r.add_function("update", [n, t, inv_n](const Tuple& a) -> std::vector<Tuple> {
        const std::int64_t j = a.at(0).as_int();
        const Value& id = a.at(1);
        const ValueList& state = a.at(2).as_list();
        const Value& msg = a.at(3);
        const ValueList& dests = state.at(2).as_list();
        double rank = state.at(0).as_number();
        Value out_state;
        if (!is_activation(msg)) {
            rank = 0.15 * inv_n + damping * msg.as_number();
            out_state = Value(ValueList{Value(rank), Value(j), state.at(2)});
        }
        ValueList out;
        if (j < t) {
            const double share = dests.empty() ? 0.0 : rank / static_cast<double>(dests.size());
            for (std::size_t k = 0; k < dests.size(); ++k)
                out.push_back(ValueList{dests[k], Value(ValueList{id, Value(static_cast<std::int64_t>(k)), Value(share)})});
            out.push_back(ValueList{id, Value(ValueList{id, Value(std::int64_t{-1}), Value(0.0)})});
            if (dests.empty())
                for (std::int64_t v = 0; v < n; ++v)
                    out.push_back(ValueList{Value(v), Value(ValueList{id, Value(std::int64_t{-2}), Value(rank * inv_n)})});
        }
        return {{out_state, Value(std::move(out))}};
    });

    const Combine c{cfg.deterministic};
    r.add_aggregate("combine", {[c](const Value& v) { return c.lift(v); },
                                [c](const Value& a, const Value& b) { return c.merge(a, b); },
                                [c](const Value& s) { return c.finalize(s); }, true});
    return r;
}

runtime::PartitionedDataset pagerank_input(const Graph& g, int partitions) {
    std::vector<Tuple> rows;
    rows.reserve(g.size());
    for (std::size_t v = 0; v < g.size(); ++v) {
        ValueList dests;
        for (auto d : g[v]) dests.push_back(Value(d));
        rows.push_back({Value(static_cast<std::int64_t>(v)), Value(std::move(dests))});
    }
    return runtime::PartitionedDataset::hash_partitioned(std::move(rows), {0}, partitions);
}

double rank_of(const Value& state) { return state.as_list().at(0).as_number(); }

std::vector<double> ranks_from(const std::vector<Tuple>& id_state, std::int64_t vertices) {
    std::vector<double> out(static_cast<std::size_t>(vertices), std::numeric_limits<double>::quiet_NaN());
    for (const auto& t : id_state) {
        const auto id = t.at(0).as_int();
        if (id >= 0 && id < vertices) out[static_cast<std::size_t>(id)] = rank_of(t.at(1));
    }
    return out;
}

std::vector<double> power_iteration(const Graph& g, int steps, double d) {
    const std::size_t n = g.size();
    if (n == 0) throw std::invalid_argument("power iteration needs at least one vertex");
    const double nn = static_cast<double>(n);
    std::vector<double> r(n, 1.0 / nn), next(n);
    for (int s = 0; s < steps; ++s) {
        double dangling = 0.0;
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t u = 0; u < n; ++u) {
            if (g[u].empty()) {
                dangling += r[u];
                continue;
            }
            const double share = r[u] / static_cast<double>(g[u].size());
            for (auto v : g[u]) next[static_cast<std::size_t>(v)] += share;
        }
        for (std::size_t v = 0; v < n; ++v) r[v] = (1.0 - d) / nn + d * (next[v] + dangling / nn);
    }
    return r;
}

}  // namespace dlflow::tasks
