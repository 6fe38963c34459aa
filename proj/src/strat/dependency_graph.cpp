#include <algorithm>

#include "dlflow/strat/strat.hpp"

namespace dlflow::strat {

const char* edge_kind_name(EdgeKind k) {
    switch (k) {
        case EdgeKind::positive: return "positive";
        case EdgeKind::negated: return "negated";
        case EdgeKind::aggregated: return "aggregated";
    }
    return "?";
}

bool DependencyGraph::has_node(const std::string& n) const { return node_index(n) >= 0; }

int DependencyGraph::node_index(const std::string& n) const {
    auto it = std::find(nodes.begin(), nodes.end(), n);
    return it == nodes.end() ? -1 : static_cast<int>(it - nodes.begin());
}

bool DependencyGraph::has_edge(const std::string& from, const std::string& to) const {
    return std::any_of(edges.begin(), edges.end(), [&](const DepEdge& e) { return e.from == from && e.to == to; });
}

bool DependencyGraph::has_edge(const std::string& from, const std::string& to, EdgeKind kind) const {
    return std::find(edges.begin(), edges.end(), DepEdge{from, to, kind}) != edges.end();
}

DependencyGraph build_dependency_graph(const Program& p) {
    DependencyGraph g;
    auto add_node = [&](const std::string& n) {
        if (!g.has_node(n)) g.nodes.push_back(n);
    };
    for (const auto& r : p.rules) {
        add_node(r.head.predicate);
        for (const auto& b : r.body)
            if (b.role != datalog::AtomRole::comparison) add_node(b.predicate);
    }
    for (const auto& r : p.rules) {
        for (const auto& b : r.body) {
            if (b.role == datalog::AtomRole::comparison) continue;
            const EdgeKind kind = b.negated            ? EdgeKind::negated
                                  : r.aggregate.present ? EdgeKind::aggregated
                                                        : EdgeKind::positive;
            DepEdge e{b.predicate, r.head.predicate, kind};
            if (std::find(g.edges.begin(), g.edges.end(), e) == g.edges.end()) g.edges.push_back(std::move(e));
        }
    }
    return g;
}

}  // namespace dlflow::strat
