// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "dlflow/cli/run.hpp"
#include "dlflow/datalog/parser.hpp"
#include "dlflow/datalog/printer.hpp"
#include "dlflow/logical/plan.hpp"
#include "dlflow/runtime/execute.hpp"
#include "dlflow/strat/strat.hpp"
#include "dlflow/tasks/bgd.hpp"
#include "dlflow/tasks/interpreter.hpp"
#include "dlflow/tasks/pagerank.hpp"
#include "dlflow/tasks/registry.hpp"
#include "dlflow/tasks/templates.hpp"

using namespace dlflow;
using namespace dlflow::tasks;

namespace {

const std::string data_dir = DLFLOW_TEST_DATA;

// Collects failed checks of one criterion.
struct Check {
    std::vector<std::string> failures;
    std::string notes;

    void expect(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
};

physical::ClusterConfig cluster(int workers, int ppw) {
    physical::ClusterConfig c;
    c.workers = workers;
    c.partitions_per_worker = ppw;
    return c;
}

std::string strip_ws(const std::string& s) {
    std::string out;
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
    return out;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Graph random_graph(std::mt19937& rng, int n, double dangling, int max_degree) {
    Graph g(static_cast<std::size_t>(n));
    std::uniform_real_distribution<double> u(0, 1);
    for (int v = 0; v < n; ++v) {
        if (u(rng) < dangling) continue;
        const int k = 1 + static_cast<int>(rng() % static_cast<unsigned>(max_degree));
        auto& out = g[static_cast<std::size_t>(v)];
        for (int i = 0; i < k; ++i) {
            const auto d = static_cast<std::int64_t>(rng() % static_cast<unsigned>(n));
            if (std::find(out.begin(), out.end(), d) == out.end()) out.push_back(d);
        }
    }
    return g;
}

Graph read_graph(const std::string& path) {
    std::ifstream in(path);
    Graph g;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::int64_t u, v;
        if (!(ss >> u)) continue;
        if (g.size() <= static_cast<std::size_t>(u)) g.resize(static_cast<std::size_t>(u) + 1);
        while (ss >> v) g[static_cast<std::size_t>(u)].push_back(v);
    }
    return g;
}

// Twenty graphs of 10 to 200 vertices; every third has no dangling vertex.
const std::vector<Graph>& random_graphs() {
    static const std::vector<Graph> graphs = [] {
        std::mt19937 rng(20240611);
        std::vector<Graph> out;
        for (int i = 0; i < 20; ++i) out.push_back(random_graph(rng, 10 * (i + 1), i % 3 == 0 ? 0.0 : 0.15, 5));
        return out;
    }();
    return graphs;
}

// Fixture graphs: the random set, the stored 50-vertex graph and small cases.
std::vector<Graph> fixtures() {
    auto out = random_graphs();
    out.push_back(read_graph(data_dir + "/data/random50.graph"));
    out.push_back({{1}, {0}});
    out.push_back({{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}});
    out.push_back({{0}});
    out.push_back({{1}, {2}, {}});
    return out;
}

runtime::RunResult run_pagerank(const Graph& g, const physical::ClusterConfig& cfg, runtime::ExecOptions opts = {}) {
    const auto pp = plan_program(pregel_program(), cfg);
    PageRankConfig pc;
    pc.vertices = static_cast<std::int64_t>(g.size());
    return runtime::execute(pp, {{"data", pagerank_input(g, cfg.partitions())}}, pagerank_udfs(pc), opts);
}

std::vector<double> ranks(const runtime::RunResult& r, const Graph& g) {
    return ranks_from(r.datasets.at("vertex"), static_cast<std::int64_t>(g.size()));
}

std::vector<double> interpreted_ranks(const Graph& g) {
    PageRankConfig pc;
    pc.vertices = static_cast<std::int64_t>(g.size());
    const auto res = interpret_program(pregel_program(), {{"data", pagerank_input(g, 1).flatten()}}, pagerank_udfs(pc));
    std::vector<std::int64_t> last(g.size(), -1);
    std::vector<Tuple> latest(g.size());
    for (const auto& f : res.facts.at("vertex")) {
        const auto id = static_cast<std::size_t>(f[1].as_int());
        if (f[0].as_int() > last[id]) {
            last[id] = f[0].as_int();
            latest[id] = {f[1], f[2]};
        }
    }
    return ranks_from(latest, pc.vertices);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return INFINITY;
    double d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::isnan(a[i] - b[i]) ? INFINITY : std::fabs(a[i] - b[i]));
    return d;
}

// Engine ranks against the oracle on every random graph.
void engine_matches_oracle(Check& c, const physical::ClusterConfig& cfg, const std::string& tag) {
    double worst = 0;
    for (std::size_t i = 0; i < random_graphs().size(); ++i) {
        const auto& g = random_graphs()[i];
        const double d = max_abs_diff(ranks(run_pagerank(g, cfg), g), power_iteration(g, 30));
        worst = std::max(worst, d);
        c.expect(d <= 1e-9, fmt::format("{} graph {}: engine vs oracle {:.3g}", tag, i, d));
    }
    c.notes += fmt::format("{} engine-oracle max {:.2g}; ", tag, worst);
}

// ---------------------------------------------------------------------------

void criterion_1(Check& c) {
    for (const auto& [name, p] : {std::pair{"pregel", pregel_program()}, std::pair{"imru", imru_program()}}) {
        const auto v = strat::check_xy(p);
        c.expect(v.stratified, std::string(name) + " rejected: " + v.reason);
    }
    const std::string published =
        "G1: new_model(M) :- init_model(M).\n"
        "G2: new_collect(reduce<S>) :- new_model(M), training_data(Id, R), map(R, M, S).\n"
        "G3: new_model(NewM) :- old_collect(AggrS), old_model(M), old_update(M, AggrS, NewM), M != NewM.\n";
    c.expect(strip_ws(datalog::print_rules(strat::xy_transform(imru_program()))) == strip_ws(published),
             "transformed imru program differs from the published listing");

    struct Mutation {
        bool pregel;
        const char* from;
        const char* to;
        const char* clause;
    };
    const std::vector<Mutation> mutations{
        {false, "model(J+1, NewM)", "model(J, NewM)", "Y-rule clause 1"},
        {true, "vertex(J+1, Id, State)", "vertex(J, Id, State)", "Y-rule clause 1"},
        {true, "send(J+1, Id, M)", "send(J, Id, M)", "Y-rule clause 1"},
        {false, "collect(J, AggrS), model(J, M),\n   update(J, M", "collect(J+1, AggrS), model(J+1, M),\n   update(J+1, M",
         "Y-rule clause 2"},
        {true, "superstep(J, Id, State, _)", "superstep(J+1, Id, State, _)", "Y-rule clause 2"},
        {false, "M != NewM.", "M != NewM, !model(J+1, NewM).", "stratification"},
        {false, "collect(J, AggrS), model(J, M)", "collect(J, AggrS), model(0, M)", "Y-rule clause 3"},
    };
    int rejected = 0;
    for (const auto& m : mutations) {
        std::string text(m.pregel ? pregel_template_text() : imru_template_text());
        const auto pos = text.find(m.from);
        if (pos == std::string::npos) {
            c.expect(false, std::string("mutation anchor missing: ") + m.from);
            continue;
        }
        text.replace(pos, std::string(m.from).size(), m.to);
        const auto v = strat::check_xy(datalog::parse_program(text));
        const bool ok = !v.stratified && v.reason.find(m.clause) != std::string::npos;
        rejected += ok ? 1 : 0;
        c.expect(ok, fmt::format("mutation '{}' -> '{}' not rejected with {}: {}", m.from, m.to, m.clause, v.reason));
    }
    c.notes = fmt::format("{} of {} mutations rejected with the clause named", rejected, mutations.size());
}

void criterion_2(Check& c) {
    c.expect(logical::canonical_serialize(logical::compile_logical(pregel_program())) ==
                 slurp(data_dir + "/golden/pregel_logical.txt"),
             "pregel logical plan differs from golden");
    c.expect(logical::canonical_serialize(logical::compile_logical(imru_program())) ==
                 slurp(data_dir + "/golden/imru_logical.txt"),
             "imru logical plan differs from golden");
}

void criterion_3(Check& c) {
    double worst_interp = 0, worst_engine = 0;
    for (std::size_t i = 0; i < random_graphs().size(); ++i) {
        const auto& g = random_graphs()[i];
        const auto oracle = power_iteration(g, 30);
        const double de = max_abs_diff(ranks(run_pagerank(g, cluster(4, 2)), g), oracle);
        const double di = max_abs_diff(interpreted_ranks(g), oracle);
        worst_engine = std::max(worst_engine, de);
        worst_interp = std::max(worst_interp, di);
        c.expect(de <= 1e-9, fmt::format("graph {} ({} vertices): engine vs oracle {:.3g}", i, g.size(), de));
        c.expect(di <= 1e-9, fmt::format("graph {} ({} vertices): interpreter vs oracle {:.3g}", i, g.size(), di));
    }
    c.notes = fmt::format("20 graphs, 8 partitions; max diff engine {:.2g}, interpreter {:.2g}", worst_engine,
                          worst_interp);
}

void criterion_4(Check& c) {
    std::mt19937 rng(4);
    std::normal_distribution<double> n(0, 1);
    double worst_fd = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t dim = 1 + rng() % 8;
        SparsePoint p;
        p.y = rng() % 2 ? 1.0 : -1.0;
        std::vector<double> w(dim);
        for (std::size_t k = 0; k < dim; ++k) {
            p.idx.push_back(static_cast<std::int64_t>(k));
            p.val.push_back(n(rng));
            w[k] = n(rng);
        }
        const auto g = logistic_gradient(w, p);
        for (std::size_t k = 0; k < dim; ++k) {
            const double h = 1e-6;
            auto a = w, b = w;
            a[k] += h;
            b[k] -= h;
            const double fd = (logistic_loss(a, p) - logistic_loss(b, p)) / (2 * h);
            const double rel = std::fabs(g[k] - fd) / std::max(std::fabs(fd), 1e-3);
            worst_fd = std::max(worst_fd, rel);
            c.expect(rel <= 1e-5, fmt::format("gradient trial {} component {}: rel error {:.3g}", trial, k, rel));
        }
    }

    std::vector<SparsePoint> pts;
    for (int i = 0; i < 256; ++i) {
        SparsePoint p;
        p.y = rng() % 2 ? 1.0 : -1.0;
        for (std::int64_t k = 0; k < 8; ++k)
            if (rng() % 2) {
                p.idx.push_back(k);
                p.val.push_back(n(rng));
            }
        pts.push_back(std::move(p));
    }
    BgdConfig cfg;
    cfg.dim = 8;
    cfg.lambda = 0.01;
    cfg.eta = 0.05;
    cfg.max_iters = 10;
    const auto want = bgd_trajectory(pts, cfg, 10).back();
    double worst_fast = 0;
    for (int parts : {1, 4, 16})
        for (const char* tree : {"flat", "sqrt", "fanin:4"})
            for (bool det : {true, false}) {
                auto cc = parts == 1 ? cluster(1, 1) : cluster(4, parts / 4);
                physical::parse_agg_tree(tree, cc);
                cfg.deterministic = det;
                const auto pp = plan_program(imru_program(), cc);
                const auto r = runtime::execute(pp, {{"training_data", bgd_input(pts, parts)}}, bgd_udfs(cfg));
                const auto got = model_from(r.datasets.at("model"));
                const std::string tag = fmt::format("P={} {} {}", parts, tree, det ? "deterministic" : "fast");
                c.expect(r.halted && r.iterations_executed == 11, tag + ": expected a halt after 11 iterations");
                if (det) {
                    c.expect(got == want, tag + ": model not bitwise equal to the sequential loop");
                } else {
                    for (std::size_t i = 0; i < got.size(); ++i) {
                        const double rel = std::fabs(got[i] - want[i]) / std::max(std::fabs(want[i]), 1e-300);
                        worst_fast = std::max(worst_fast, rel);
                        c.expect(rel <= 1e-8, fmt::format("{}: component {} rel error {:.3g}", tag, i, rel));
                    }
                }
            }

    // Update that returns the prior model: the M != NewM guard stops the loop.
    cfg.deterministic = true;
    cfg.max_iters = 0;
    const auto pp = plan_program(imru_program(), cluster(4, 1));
    const auto r = runtime::execute(pp, {{"training_data", bgd_input(pts, 4)}}, bgd_udfs(cfg));
    c.expect(r.halted && r.iterations_executed == 1, "identity update did not halt after one iteration");
    c.expect(model_from(r.datasets.at("model")) == std::vector<double>(8, 0.0), "identity update changed the model");
    c.notes = fmt::format("gradient max rel {:.2g}; 9 layouts bitwise, fast mode max rel {:.2g}", worst_fd, worst_fast);
}

std::uint64_t shuffled(const runtime::RunResult& r) {
    std::uint64_t t = 0;
    for (const auto& m : r.iterations)
        for (const auto& [label, c] : m.connectors) t += c.tuples;
    return t;
}

void criterion_5(Check& c) {
    int compared = 0;
    for (const auto& g : fixtures()) {
        auto on = cluster(2, 2), off = cluster(2, 2);
        off.combiner_enabled = false;
        c.expect(ranks(run_pagerank(g, on), g) == ranks(run_pagerank(g, off), g),
                 fmt::format("{}-vertex fixture: combiner changed the ranks", g.size()));
        ++compared;
    }
    // Average out-degree 4 over 4 partitions.
    std::mt19937 rng(5);
    Graph g(300);
    for (std::size_t v = 0; v < g.size(); ++v)
        for (int k = 0; k < 4; ++k) g[v].push_back(static_cast<std::int64_t>((v + 1 + rng() % 299) % g.size()));
    auto on = cluster(2, 2), off = cluster(2, 2);
    off.combiner_enabled = false;
    const auto with = shuffled(run_pagerank(g, on));
    const auto without = shuffled(run_pagerank(g, off));
    c.expect(with < without, fmt::format("combiner did not reduce m-to-n traffic: {} vs {}", with, without));
    c.notes = fmt::format("{} fixtures unchanged; m-to-n tuples {} with combiner, {} without", compared, with, without);
}

void criterion_6(Check& c) {
    runtime::ExecOptions o;
    o.record_trace = true;
    int streams = 0;
    for (const auto& g : fixtures()) {
        auto merge = cluster(4, 2), sort = cluster(4, 2);
        sort.connector_choice = physical::ConnectorChoice::hash_then_sort;
        const auto a = run_pagerank(g, merge, o);
        const auto b = run_pagerank(g, sort, o);
        c.expect(ranks(a, g) == ranks(b, g), fmt::format("{}-vertex fixture: final ranks differ", g.size()));
        c.expect(a.trace.size() == b.trace.size(), "trace lengths differ");
        for (std::size_t i = 0; i < std::min(a.trace.size(), b.trace.size()); ++i) {
            const auto& sa = a.trace[i].written.at("send");
            const auto& sb = b.trace[i].written.at("send");
            c.expect(sa == sb, fmt::format("{}-vertex fixture iteration {}: message streams differ", g.size(), i));
            for (const auto& part : sa)
                for (std::size_t k = 1; k < part.size(); ++k)
                    c.expect(part[k - 1][0] < part[k][0], "message stream not sorted by Id");
            ++streams;
        }
    }
    auto sort = cluster(4, 2);
    sort.connector_choice = physical::ConnectorChoice::hash_then_sort;
    engine_matches_oracle(c, cluster(4, 2), "merge");
    engine_matches_oracle(c, sort, "hash-sort");
    c.notes = fmt::format("{} iteration streams compared; {}", streams, c.notes);
}

void criterion_7(Check& c) {
    int runs = 0;
    for (const auto& g : fixtures()) {
        const auto r = run_pagerank(g, cluster(2, 2));
        const std::string tag = fmt::format("{}-vertex fixture", g.size());
        c.expect(r.halted, tag + ": did not halt");
        c.expect(r.shadow.ran && r.shadow.derived == 0, tag + ": shadow step derived tuples");
        // Every vertex is active in supersteps 0..30: activation, then its own keep-alive message.
        c.expect(r.iterations.size() == 31, tag + ": expected 31 supersteps");
        for (const auto& m : r.iterations) {
            const auto calls = m.udf_calls.count("update") ? m.udf_calls.at("update") : 0;
            c.expect(calls == g.size(), fmt::format("{} superstep {}: {} update calls for {} vertices", tag, m.iter,
                                                    calls, g.size()));
            c.expect(m.active_count && *m.active_count == calls, tag + ": active count differs from update calls");
        }
        ++runs;
    }
    std::mt19937 rng(7);
    std::normal_distribution<double> n(0, 1);
    std::vector<SparsePoint> pts;
    for (int i = 0; i < 64; ++i) pts.push_back({rng() % 2 ? 1.0 : -1.0, {0, 1, 2}, {n(rng), n(rng), n(rng)}});
    for (double tol : {0.0, 1e-4}) {
        BgdConfig cfg;
        cfg.dim = 3;
        cfg.tol = tol;
        cfg.eta = 0.01;
        cfg.max_iters = tol > 0 ? 100000 : 10;
        runtime::ExecOptions o;
        o.limits.max_iters = 100000;
        const auto pp = plan_program(imru_program(), cluster(4, 1));
        const auto r = runtime::execute(pp, {{"training_data", bgd_input(pts, 4)}}, bgd_udfs(cfg), o);
        c.expect(r.halted, "bgd did not halt");
        c.expect(r.shadow.ran && r.shadow.derived == 0, "bgd shadow step changed the model");
        ++runs;
    }
    c.notes = fmt::format("{} halted runs checked", runs);
}

void criterion_8(Check& c) {
    // 20000 vertices with 5 distinct out-edges each: 100000 edges, none dangling.
    const auto path = std::filesystem::temp_directory_path() / "dlflow_acceptance_100k.graph";
    {
        std::mt19937 rng(8);
        std::ofstream out(path);
        const int n = 20000;
        for (int v = 0; v < n; ++v) {
            out << v;
            std::vector<int> dests;
            while (dests.size() < 5) {
                const int d = static_cast<int>(rng() % n);
                if (std::find(dests.begin(), dests.end(), d) == dests.end()) dests.push_back(d);
            }
            for (int d : dests) out << ' ' << d;
            out << '\n';
        }
    }
    cli::BenchSpec b;
    b.base.task = "pagerank";
    b.base.inputs = {path.string()};
    b.base.supersteps = 10;
    b.workers = {1, 2, 4};
    b.repeat = 2;
    const auto rows = cli::bench(b);
    std::filesystem::remove(path);
    std::cout << cli::format_bench_table(rows);
    for (const auto& r : rows) std::cout << r.to_json() << "\n";
    std::vector<double> avg;
    for (const auto& r : rows) avg.push_back(r.summary.avg_iter_ms);
    for (std::size_t i = 1; i < avg.size(); ++i)
        c.expect(avg[i] <= avg[i - 1], fmt::format("average iteration time rose from {:.2f} ms at {} workers to {:.2f} ms at {} workers",
                                                   avg[i - 1], rows[i - 1].cluster.workers, avg[i], rows[i].cluster.workers));
    c.notes = fmt::format("avg iteration ms at 1/2/4 workers: {:.2f} / {:.2f} / {:.2f}; hardware threads {}", avg[0],
                          avg[1], avg[2], std::thread::hardware_concurrency());
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* title;
        double budget_s;
        std::function<void(Check&)> run;
    };
    const std::vector<Criterion> criteria{
        {1, "templates are XY-stratified, transform matches, mutations rejected", 1, criterion_1},
        {2, "logical plans match the golden serializations", 1, criterion_2},
        {3, "engine, interpreter and power iteration agree on 20 random graphs", 30, criterion_3},
        {4, "BGD gradient, layouts and aggregation trees match the sequential loop", 30, criterion_4},
        {5, "combiner keeps outputs and reduces m-to-n traffic", 10, criterion_5},
        {6, "hash-merge and hash-then-sort give identical streams and ranks", 30, criterion_6},
        {7, "halted runs reach a fixpoint; update runs once per active vertex", 10, criterion_7},
        {8, "iteration time does not rise from 1 to 2 to 4 workers; bench table emitted", 120, criterion_8},
    };
    int failed = 0;
    for (const auto& cr : criteria) {
        Check c;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            cr.run(c);
        } catch (const std::exception& e) {
            c.failures.push_back(std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        c.expect(secs < cr.budget_s, fmt::format("took {:.2f} s, budget {} s", secs, cr.budget_s));
        const bool ok = c.failures.empty();
        failed += ok ? 0 : 1;
        std::cout << fmt::format("criterion {}: {} - {} ({:.2f} s{}{})\n", cr.id, ok ? "PASS" : "FAIL", cr.title, secs,
                                 c.notes.empty() ? "" : "; ", c.notes);
        const std::size_t shown = std::min<std::size_t>(c.failures.size(), 10);
        for (std::size_t i = 0; i < shown; ++i) std::cout << "    " << c.failures[i] << "\n";
        if (c.failures.size() > shown) std::cout << "    ... " << c.failures.size() - shown << " more\n";
        std::cout.flush();
    }
    return failed == 0 ? 0 : 1;
}
