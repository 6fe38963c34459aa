#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "dlflow/datalog/parser.hpp"
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

physical::ClusterConfig cluster(int workers, int ppw) {
    physical::ClusterConfig c;
    c.workers = workers;
    c.partitions_per_worker = ppw;
    return c;
}

Graph read_graph(const std::string& path) {
    std::ifstream in(path);
    EXPECT_TRUE(in) << path;
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

std::vector<double> read_doubles(const std::string& path) {
    std::ifstream in(path);
    EXPECT_TRUE(in) << path;
    std::vector<double> out;
    double x;
    while (in >> x) out.push_back(x);
    return out;
}

Graph random_graph(std::mt19937& rng, int n, double dangling) {
    Graph g(static_cast<std::size_t>(n));
    std::uniform_real_distribution<double> u(0, 1);
    for (int v = 0; v < n; ++v) {
        if (u(rng) < dangling) continue;
        const int k = 1 + static_cast<int>(rng() % 4);
        for (int i = 0; i < k; ++i) {
            const auto d = static_cast<std::int64_t>(rng() % static_cast<unsigned>(n));
            auto& out = g[static_cast<std::size_t>(v)];
            if (std::find(out.begin(), out.end(), d) == out.end()) out.push_back(d);
        }
    }
    return g;
}

std::vector<double> engine_ranks(const Graph& g, const physical::ClusterConfig& cfg, int steps = 30) {
    const auto pp = plan_program(pregel_program(), cfg);
    PageRankConfig pc;
    pc.vertices = static_cast<std::int64_t>(g.size());
    pc.supersteps = steps;
    const auto r = runtime::execute(pp, {{"data", pagerank_input(g, cfg.partitions())}}, pagerank_udfs(pc));
    return ranks_from(r.datasets.at("vertex"), pc.vertices);
}

// Latest vertex state per id among the interpreter's vertex facts.
std::vector<double> interpreted_ranks(const Graph& g, int steps = 30) {
    PageRankConfig pc;
    pc.vertices = static_cast<std::int64_t>(g.size());
    pc.supersteps = steps;
    std::vector<Tuple> data;
    for (const auto& t : pagerank_input(g, 1).flatten()) data.push_back(t);
    const auto res = interpret_program(pregel_program(), {{"data", data}}, pagerank_udfs(pc));
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

std::vector<SparsePoint> random_points(std::mt19937& rng, int count, std::size_t dim) {
    std::normal_distribution<double> n(0, 1);
    std::vector<SparsePoint> pts;
    for (int i = 0; i < count; ++i) {
        SparsePoint p;
        p.y = rng() % 2 ? 1.0 : -1.0;
        for (std::size_t k = 0; k < dim; ++k)
            if (rng() % 3) {
                p.idx.push_back(static_cast<std::int64_t>(k));
                p.val.push_back(n(rng));
            }
        pts.push_back(std::move(p));
    }
    return pts;
}

runtime::RunResult run_bgd(const std::vector<SparsePoint>& pts, const BgdConfig& cfg,
                           const physical::ClusterConfig& cc, const runtime::ExecOptions& opts = {}) {
    const auto pp = plan_program(imru_program(), cc);
    return runtime::execute(pp, {{"training_data", bgd_input(pts, cc.partitions())}}, bgd_udfs(cfg), opts);
}

}  // namespace

TEST(PowerIteration, SmallGraphs) {
    for (double x : power_iteration({{1}, {0}}, 30)) EXPECT_NEAR(x, 0.5, 1e-15);
    for (double x : power_iteration({{1, 2, 3}, {0, 2, 3}, {0, 1, 3}, {0, 1, 2}}, 30)) EXPECT_NEAR(x, 0.25, 1e-15);
    for (int s = 0; s <= 5; ++s) EXPECT_DOUBLE_EQ(power_iteration({{0}}, s)[0], 1.0);
}

TEST(PowerIteration, MatchesTheStoredFixture) {
    const auto g = read_graph(std::string(DLFLOW_TEST_DATA) + "/data/random50.graph");
    const auto want = read_doubles(std::string(DLFLOW_TEST_DATA) + "/data/random50.ranks");
    ASSERT_EQ(g.size(), 50u);
    const auto got = power_iteration(g, 30);
    for (std::size_t v = 0; v < g.size(); ++v) EXPECT_NEAR(got[v], want[v], 1e-15) << v;
}

TEST(PageRank, ChainWithDanglingEnd) {
    // a -> b -> c. By hand: c's mass is spread evenly each step.
    const Graph g{{1}, {2}, {}};
    const auto want = power_iteration(g, 30);
    const auto got = engine_ranks(g, cluster(2, 2));
    for (std::size_t v = 0; v < 3; ++v) EXPECT_NEAR(got[v], want[v], 1e-12);
    EXPECT_NEAR(std::accumulate(got.begin(), got.end(), 0.0), 1.0, 1e-12);
    EXPECT_LT(got[0], got[1]);
    EXPECT_LT(got[1], got[2]);
}

TEST(PageRank, SelfLoopKeepsRankOne) {
    const auto got = engine_ranks({{0}}, cluster(1, 1));
    EXPECT_DOUBLE_EQ(got[0], 1.0);
}

TEST(PageRank, EngineMatchesTheFixture) {
    const auto g = read_graph(std::string(DLFLOW_TEST_DATA) + "/data/random50.graph");
    const auto want = read_doubles(std::string(DLFLOW_TEST_DATA) + "/data/random50.ranks");
    const auto got = engine_ranks(g, cluster(4, 2));
    for (std::size_t v = 0; v < g.size(); ++v) EXPECT_NEAR(got[v], want[v], 1e-12) << v;
}

TEST(PageRank, RankSumIsOneAtEverySuperstep) {
    const Graph g{{1, 2}, {2, 3}, {0}, {0, 1, 2}};
    runtime::ExecOptions o;
    o.record_trace = true;
    PageRankConfig pc;
    pc.vertices = 4;
    const auto pp = plan_program(pregel_program(), cluster(2, 2));
    const auto r = runtime::execute(pp, {{"data", pagerank_input(g, 4)}}, pagerank_udfs(pc), o);
    ASSERT_FALSE(r.trace.empty());
    for (const auto& t : r.trace) {
        double sum = 0;
        for (const auto& part : t.stores.at("vertex"))
            for (const auto& row : part) sum += rank_of(row[1]);
        EXPECT_NEAR(sum, 1.0, 1e-9) << "iteration " << t.iter;
    }
}

TEST(PageRank, RejectsAnEmptyGraph) {
    PageRankConfig pc;
    EXPECT_THROW(pagerank_udfs(pc), std::invalid_argument);
    pc.vertices = 1;
    pc.supersteps = 0;
    EXPECT_THROW(pagerank_udfs(pc), std::invalid_argument);
}

TEST(Interpreter, PageRankAgreesWithEngineAndOracle) {
    std::mt19937 rng(11);
    for (int trial = 0; trial < 4; ++trial) {
        const auto g = random_graph(rng, 10 + trial * 7, 0.2);
        const auto oracle = power_iteration(g, 30);
        const auto interp = interpreted_ranks(g);
        const auto engine = engine_ranks(g, cluster(4, 2));
        for (std::size_t v = 0; v < g.size(); ++v) {
            EXPECT_NEAR(interp[v], oracle[v], 1e-9) << trial << ":" << v;
            EXPECT_NEAR(engine[v], oracle[v], 1e-9) << trial << ":" << v;
        }
    }
}

TEST(Interpreter, SimpleRecursionReachesAFixpoint) {
    const auto p = datalog::parse_program(R"(
.decl edge/2
reach(0, X, Y) :- edge(X, Y).
reach(J+1, X, Z) :- reach(J, X, Y), edge(Y, Z), X != Z.
)");
    const auto res = interpret_program(p, {{"edge", {{Value(std::int64_t{1}), Value(std::int64_t{2})},
                                                      {Value(std::int64_t{2}), Value(std::int64_t{3})}}}},
                                       {});
    // (1,2),(2,3) at 0; (1,3) at 1; nothing new at 2.
    EXPECT_EQ(res.facts.at("reach").size(), 3u);
    EXPECT_EQ(res.iterations, 2);
}

TEST(Interpreter, RejectsProgramsThatAreNotStratified) {
    const auto p = datalog::parse_program(R"(
.decl e/1
p(J+1, X) :- e(X), !p(J+1, X), p(J, X).
p(0, X) :- e(X).
)");
    EXPECT_THROW(interpret_program(p, {}, {}), strat::IllFormedProgram);
}

TEST(Interpreter, StopsAtTheIterationLimit) {
    const auto p = datalog::parse_program(R"(
.decl seed/1
count(0, X) :- seed(X).
count(J+1, X) :- count(J, X).
)");
    InterpretLimits lim;
    lim.max_iters = 7;
    EXPECT_THROW(interpret_program(p, {{"seed", {{Value(std::int64_t{1})}}}}, {}, lim), LimitExceeded);
}

TEST(Bgd, LossAndGradientAtZero) {
    const SparsePoint p{-1.0, {0, 2}, {1.0, 3.0}};
    const std::vector<double> w(3, 0.0);
    EXPECT_NEAR(logistic_loss(w, p), std::log(2.0), 1e-15);
    EXPECT_EQ(logistic_gradient(w, p), (std::vector<double>{0.5, 0.0, 1.5}));
}

TEST(Bgd, GradientMatchesFiniteDifferences) {
    std::mt19937 rng(5);
    std::normal_distribution<double> n(0, 1);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t dim = 1 + rng() % 6;
        SparsePoint p;
        p.y = rng() % 2 ? 1.0 : -1.0;
        for (std::size_t k = 0; k < dim; ++k) {
            p.idx.push_back(static_cast<std::int64_t>(k));
            p.val.push_back(n(rng));
        }
        std::vector<double> w(dim);
        for (auto& x : w) x = n(rng);
        const auto g = logistic_gradient(w, p);
        for (std::size_t k = 0; k < dim; ++k) {
            const double h = 1e-6;
            auto a = w, b = w;
            a[k] += h;
            b[k] -= h;
            const double fd = (logistic_loss(a, p) - logistic_loss(b, p)) / (2 * h);
            EXPECT_NEAR(g[k], fd, 1e-5 * std::max(1.0, std::fabs(fd))) << trial << ":" << k;
        }
    }
}

TEST(Bgd, ReduceIsComponentwiseSumWithZeroIdentity) {
    BgdConfig cfg;
    for (bool det : {true, false}) {
        cfg.deterministic = det;
        const auto& r = bgd_udfs(cfg).aggregate("reduce");
        const Value a(DenseVector{1.0, 2.0}), b(DenseVector{0.5, -1.0}), z(DenseVector{0.0, 0.0});
        EXPECT_EQ(r.finalize(r.merge(r.lift(a), r.lift(b))), Value(DenseVector{1.5, 1.0}));
        EXPECT_EQ(r.finalize(r.merge(r.lift(a), r.lift(z))), a);
    }
}

TEST(Bgd, PredictionIsASigmoid) {
    EXPECT_DOUBLE_EQ(prediction({0.0, 0.0}, {3.0, 4.0}), 0.5);
    const double p = prediction({1.0, -2.0}, {3.0, 1.0});
    EXPECT_NEAR(p, 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
    EXPECT_THROW(prediction({1.0}, {1.0, 2.0}), std::invalid_argument);
}

TEST(Bgd, RejectsBadConfigs) {
    BgdConfig c;
    c.dim = 0;
    EXPECT_THROW(bgd_udfs(c), std::invalid_argument);
    c = {};
    c.eta = 0;
    EXPECT_THROW(bgd_udfs(c), std::invalid_argument);
    c = {};
    c.tol = -1;
    EXPECT_THROW(bgd_udfs(c), std::invalid_argument);
}

TEST(Bgd, SeparableToySetMatchesTheSequentialLoop) {
    const std::vector<SparsePoint> pts{
        {1.0, {0, 1}, {2.0, 1.0}}, {1.0, {0, 1}, {1.0, 2.0}}, {-1.0, {0, 1}, {-2.0, -1.0}}, {-1.0, {0, 1}, {-1.0, -2.0}}};
    BgdConfig cfg;
    cfg.dim = 2;
    cfg.max_iters = 100;
    runtime::ExecOptions o;
    o.limits.max_iters = 200;
    const auto r = run_bgd(pts, cfg, cluster(2, 2), o);
    EXPECT_EQ(r.iterations_executed, 101);
    const auto want = bgd_trajectory(pts, cfg, 100).back();
    const auto got = model_from(r.datasets.at("model"));
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(got[i], want[i], 1e-8 * std::fabs(want[i]));
    EXPECT_GT(prediction(got, {2.0, 1.0}), 0.5);
    EXPECT_LT(prediction(got, {-1.0, -2.0}), 0.5);
}

TEST(Bgd, DeterministicModelIsBitwiseAcrossLayouts) {
    std::mt19937 rng(3);
    const auto pts = random_points(rng, 64, 5);
    BgdConfig cfg;
    cfg.dim = 5;
    cfg.lambda = 0.01;
    const auto want = bgd_trajectory(pts, cfg, 10).back();
    for (int p : {1, 4, 16})
        for (auto tree : {physical::AggTree::flat, physical::AggTree::sqrt_layer, physical::AggTree::fanin}) {
            auto cc = cluster(p == 1 ? 1 : 4, p == 1 ? 1 : p / 4);
            cc.agg_tree = tree;
            EXPECT_EQ(model_from(run_bgd(pts, cfg, cc).datasets.at("model")), want) << p << " " << cc.to_string();
        }
}

TEST(Bgd, ShuffledInputChangesTheFastSumOnlySlightly) {
    std::mt19937 rng(9);
    auto pts = random_points(rng, 200, 4);
    BgdConfig cfg;
    cfg.dim = 4;
    cfg.max_iters = 3;
    const auto exact = model_from(run_bgd(pts, cfg, cluster(4, 1)).datasets.at("model"));
    cfg.deterministic = false;
    const auto fast = model_from(run_bgd(pts, cfg, cluster(4, 1)).datasets.at("model"));
    std::shuffle(pts.begin(), pts.end(), rng);
    cfg.deterministic = true;
    EXPECT_EQ(model_from(run_bgd(pts, cfg, cluster(4, 1)).datasets.at("model")), exact);
    cfg.deterministic = false;
    const auto shuffled = model_from(run_bgd(pts, cfg, cluster(4, 1)).datasets.at("model"));
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(shuffled[i], fast[i], 1e-10 * std::fabs(fast[i]));
}

TEST(Bgd, ToleranceStopsBeforeMaxIters) {
    const std::vector<SparsePoint> pts{{1.0, {0}, {1.0}}, {-1.0, {0}, {-1.0}}};
    BgdConfig cfg;
    cfg.max_iters = 10000;
    cfg.tol = 1e-3;
    cfg.eta = 0.5;
    runtime::ExecOptions o;
    o.limits.max_iters = 10000;
    const auto r = run_bgd(pts, cfg, cluster(1, 1), o);
    EXPECT_TRUE(r.halted);
    EXPECT_LT(r.iterations_executed, 10000);
    ASSERT_TRUE(r.iterations.back().model_delta.has_value());
    EXPECT_LT(*r.iterations.back().model_delta, 1e-3);
}

TEST(Registry, KnowsBothTasks) {
    EXPECT_EQ(find_task("pagerank").template_name, "pregel");
    EXPECT_EQ(find_task("bgd-logistic").template_name, "imru");
    EXPECT_THROW(find_task("svm"), std::invalid_argument);
}
