#include <algorithm>
#include <deque>

#include <fmt/format.h>

#include "dlflow/graph.hpp"
#include "dlflow/strat/strat.hpp"

namespace dlflow::strat {

namespace {

// Shortest path from `from` to `to` restricted to one component.
std::vector<int> path_within(const std::vector<std::vector<int>>& adj, const std::vector<int>& comp_of, int from,
                             int to) {
    std::vector<int> prev(adj.size(), -1);
    std::vector<bool> seen(adj.size(), false);
    std::deque<int> q{from};
    seen[from] = true;
    while (!q.empty()) {
        const int v = q.front();
        q.pop_front();
        if (v == to) break;
        for (int w : adj[v]) {
            if (seen[w] || comp_of[w] != comp_of[from]) continue;
            seen[w] = true;
            prev[w] = v;
            q.push_back(w);
        }
    }
    std::vector<int> path;
    for (int v = to; v != -1; v = prev[v]) {
        path.push_back(v);
        if (v == from) break;
    }
    std::reverse(path.begin(), path.end());
    return path;
}

}  // namespace

StratifyResult stratify(const Program& p) {
    const DependencyGraph g = build_dependency_graph(p);
    const int n = static_cast<int>(g.nodes.size());
    std::vector<std::vector<int>> adj(n);
    for (const auto& e : g.edges) adj[g.node_index(e.from)].push_back(g.node_index(e.to));
    const auto comps = strongly_connected_components(adj);
    const auto comp_of = component_ids(comps, n);

    StratifyResult result;
    for (const auto& e : g.edges) {
        if (e.kind == EdgeKind::positive) continue;
        const int u = g.node_index(e.from), v = g.node_index(e.to);
        if (comp_of[u] != comp_of[v]) continue;
        // Cycle: u -> v -> ... -> u, reported without repeating u.
        result.cycle.push_back(e.from);
        if (u != v)
            for (int w : path_within(adj, comp_of, v, u))
                if (w != u) result.cycle.push_back(g.nodes[w]);
        return result;
    }

    // Longest path over the condensation; components come sinks first.
    std::vector<int> comp_stratum(comps.size(), 0);
    for (std::size_t k = comps.size(); k-- > 0;) {
        for (int v : comps[k]) {
            for (const auto& e : g.edges) {
                if (e.to != g.nodes[v]) continue;
                const int src = comp_of[g.node_index(e.from)];
                if (src == static_cast<int>(k)) continue;
                const int w = e.kind == EdgeKind::positive ? 0 : 1;
                comp_stratum[k] = std::max(comp_stratum[k], comp_stratum[src] + w);
            }
        }
    }
    Strata s;
    for (int v = 0; v < n; ++v) {
        s.assignment[g.nodes[v]] = comp_stratum[comp_of[v]];
        s.count = std::max(s.count, comp_stratum[comp_of[v]] + 1);
    }

    // Group rules by head stratum; within a stratum order by dependency
    // (a rule whose head feeds another rule's body goes first), ties by source.
    s.groups.assign(static_cast<std::size_t>(s.count), {});
    for (int k = 0; k < s.count; ++k) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < p.rules.size(); ++i)
            if (s.assignment.at(p.rules[i].head.predicate) == k) members.push_back(i);
        std::vector<bool> placed(p.rules.size(), false);
        auto waits_on = [&](std::size_t a, std::size_t b) {
            // true when rule a reads the head of unplaced rule b
            if (p.rules[a].head.predicate == p.rules[b].head.predicate) return false;
            for (const auto& atom : p.rules[a].body)
                if (atom.role != datalog::AtomRole::comparison && atom.predicate == p.rules[b].head.predicate)
                    return true;
            return false;
        };
        while (s.groups[k].size() < members.size()) {
            std::size_t pick = members.size();
            for (std::size_t m = 0; m < members.size() && pick == members.size(); ++m) {
                const std::size_t a = members[m];
                if (placed[a]) continue;
                bool ready = true;
                for (std::size_t b : members)
                    if (!placed[b] && b != a && waits_on(a, b)) ready = false;
                if (ready) pick = m;
            }
            if (pick == members.size()) {  // positive cycle inside the stratum: fall back to source order
                for (std::size_t m = 0; m < members.size(); ++m)
                    if (!placed[members[m]]) {
                        pick = m;
                        break;
                    }
            }
            placed[members[pick]] = true;
            s.groups[k].push_back(members[pick]);
        }
    }
    result.strata = std::move(s);
    return result;
}

bool check_strata_invariants(const DependencyGraph& g, const Strata& s, std::string* why) {
    for (const auto& e : g.edges) {
        auto fi = s.assignment.find(e.from);
        auto ti = s.assignment.find(e.to);
        if (fi == s.assignment.end() || ti == s.assignment.end()) {
            if (why) *why = fmt::format("edge {} -> {} has an unassigned endpoint", e.from, e.to);
            return false;
        }
        const bool ok = e.kind == EdgeKind::positive ? ti->second >= fi->second : ti->second > fi->second;
        if (!ok) {
            if (why)
                *why = fmt::format("{} edge {}({}) -> {}({}) violates the stratum order", edge_kind_name(e.kind), e.from,
                                   fi->second, e.to, ti->second);
            return false;
        }
    }
    return true;
}

}  // namespace dlflow::strat
