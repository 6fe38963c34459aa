#include <algorithm>
#include <filesystem>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "dlflow/logical/plan.hpp"
#include "dlflow/physical/plan.hpp"
#include "dlflow/runtime/dataset.hpp"
#include "dlflow/runtime/exchange.hpp"
#include "dlflow/runtime/execute.hpp"
#include "dlflow/runtime/operators.hpp"
#include "dlflow/runtime/vertex_store.hpp"
#include "dlflow/tasks/bgd.hpp"
#include "dlflow/tasks/pagerank.hpp"
#include "dlflow/tasks/registry.hpp"
#include "dlflow/tasks/templates.hpp"

using namespace dlflow;
using namespace dlflow::runtime;
using physical::Connector;
using physical::ConnectorKind;
using physical::OpKind;

namespace {

Value I(std::int64_t x) { return Value(x); }

physical::ClusterConfig cluster(int workers, int ppw) {
    physical::ClusterConfig c;
    c.workers = workers;
    c.partitions_per_worker = ppw;
    return c;
}

RunResult run_pagerank(const tasks::Graph& g, const physical::ClusterConfig& cfg, int supersteps = 30,
                       ExecOptions opts = {}) {
    const auto pp = tasks::plan_program(tasks::pregel_program(), cfg);
    Catalog cat{{"data", tasks::pagerank_input(g, cfg.partitions())}};
    tasks::PageRankConfig pc;
    pc.vertices = static_cast<std::int64_t>(g.size());
    pc.supersteps = supersteps;
    return execute(pp, cat, tasks::pagerank_udfs(pc), opts);
}

std::vector<double> ranks(const RunResult& r, std::size_t n) {
    return tasks::ranks_from(r.datasets.at("vertex"), static_cast<std::int64_t>(n));
}

// Aggregate collecting its inputs into a list.
UdfRegistry list_append() {
    UdfRegistry u;
    u.add_aggregate("append", {[](const Value& v) { return Value(ValueList{v}); },
                               [](const Value& a, const Value& b) {
                                   ValueList l = a.as_list();
                                   for (const auto& x : b.as_list()) l.push_back(x);
                                   return Value(std::move(l));
                               },
                               [](const Value& s) { return s; }, false});
    return u;
}

}  // namespace

TEST(Operators, GroupByAppendsPerKey) {
    physical::PhysicalOperator op;
    op.id = 0;
    op.kind = OpKind::preclustered_group_by;
    op.keys = {"K"};
    op.udf = "append";
    op.aggregate_over = "V";
    op.schema = {"K", "V"};
    op.inputs.push_back({});
    OperatorInputs in;
    in.schema = {"K", "V"};
    in.partitions = {{{I(1), I(10)}, {I(1), I(11)}, {I(2), I(20)}}};
    const auto out = run_operator(op, in, list_append());
    ASSERT_EQ(out.size(), 1u);
    const std::vector<Tuple> want{{I(1), Value(ValueList{I(10), I(11)})}, {I(2), Value(ValueList{I(20)})}};
    EXPECT_EQ(out[0], want);
}

TEST(Operators, GroupByOnEmptyInputEmitsNothing) {
    physical::PhysicalOperator op;
    op.kind = OpKind::preclustered_group_by;
    op.keys = {"K"};
    op.udf = "append";
    op.aggregate_over = "V";
    op.schema = {"K", "V"};
    op.inputs.push_back({});
    OperatorInputs in;
    in.schema = {"K", "V"};
    in.partitions = {{}, {}};
    const auto out = run_operator(op, in, list_append());
    ASSERT_EQ(out.size(), 2u);
    EXPECT_TRUE(out[0].empty());
    EXPECT_TRUE(out[1].empty());
}

TEST(Operators, UnsortedGroupInputIsAPropertyViolation) {
    physical::PhysicalOperator op;
    op.kind = OpKind::preclustered_group_by;
    op.keys = {"K"};
    op.udf = "append";
    op.aggregate_over = "V";
    op.schema = {"K", "V"};
    op.inputs.push_back({});
    OperatorInputs in;
    in.schema = {"K", "V"};
    in.partitions = {{{I(2), I(1)}, {I(1), I(2)}}};
    EXPECT_THROW(run_operator(op, in, list_append()), PropertyViolation);
}

TEST(Operators, ComparisonsMixNumbersAndUseEquality) {
    UdfRegistry u;
    EXPECT_TRUE(compare_values("<", I(1), Value(1.5), u));
    EXPECT_TRUE(compare_values("!=", Value(), I(0), u));
    EXPECT_FALSE(compare_values("!=", Value(), Value(), u));
    EXPECT_TRUE(compare_values("=", Value(DenseVector{1.0}), Value(DenseVector{1.05}), u, 0.1));
}

TEST(Exchange, OneToOneIsIdentity) {
    Connector c;
    c.kind = ConnectorKind::one_to_one;
    const std::vector<std::vector<Tuple>> in{{{I(3)}, {I(1)}}, {{I(2)}}};
    EXPECT_EQ(run_connector(c, {"A"}, in, 2), in);
}

TEST(Exchange, HashKeepsTheMultisetAndRoutesByKey) {
    Connector c;
    c.kind = ConnectorKind::m_to_n_hash;
    c.keys = {"K"};
    std::vector<std::vector<Tuple>> in(3);
    std::vector<Tuple> all;
    for (std::int64_t k = 0; k < 1000; ++k) {
        Tuple t{I(k % 97), I(k)};
        in[static_cast<std::size_t>(k % 3)].push_back(t);
        all.push_back(t);
    }
    ConnectorMetrics m;
    const auto out = run_connector(c, {"K", "V"}, in, 4, &m);
    ASSERT_EQ(out.size(), 4u);
    std::vector<Tuple> got;
    for (int p = 0; p < 4; ++p)
        for (const auto& t : out[static_cast<std::size_t>(p)]) {
            EXPECT_EQ(partition_of(t, {0}, 4), p);
            got.push_back(t);
        }
    std::sort(got.begin(), got.end());
    std::sort(all.begin(), all.end());
    EXPECT_EQ(got, all);
    EXPECT_EQ(m.tuples, 1000u);
    EXPECT_GT(m.bytes, 0u);
}

TEST(Exchange, MergeMatchesAFullSort) {
    Connector c;
    c.kind = ConnectorKind::m_to_n_hash_merge;
    c.keys = {"K"};
    c.sort_keys = {"K"};
    std::mt19937 rng(7);
    std::vector<std::vector<Tuple>> in(3);
    std::vector<Tuple> all;
    for (auto& part : in) {
        for (int i = 0; i < 200; ++i) part.push_back({I(static_cast<std::int64_t>(rng() % 50)), I(i)});
        std::stable_sort(part.begin(), part.end(), [](const Tuple& a, const Tuple& b) { return a[0] < b[0]; });
        all.insert(all.end(), part.begin(), part.end());
    }
    const auto out = run_connector(c, {"K", "V"}, in, 2);
    for (int p = 0; p < 2; ++p) {
        std::vector<Tuple> want;
        for (const auto& t : all)
            if (partition_of(t, {0}, 2) == p) want.push_back(t);
        std::stable_sort(want.begin(), want.end(), [](const Tuple& a, const Tuple& b) { return a[0] < b[0]; });
        const auto& got = out[static_cast<std::size_t>(p)];
        ASSERT_EQ(got.size(), want.size());
        for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i][0], want[i][0]);
        auto sorted_got = got, sorted_want = want;
        std::sort(sorted_got.begin(), sorted_got.end());
        std::sort(sorted_want.begin(), sorted_want.end());
        EXPECT_EQ(sorted_got, sorted_want);
    }
}

TEST(Exchange, MergeRejectsUnsortedSenders) {
    Connector c;
    c.kind = ConnectorKind::m_to_n_hash_merge;
    c.keys = {"K"};
    c.sort_keys = {"K"};
    const std::vector<std::vector<Tuple>> in{{{I(2)}, {I(1)}}};
    EXPECT_THROW(run_connector(c, {"K"}, in, 1), PropertyViolation);
}

TEST(Exchange, BroadcastCountsEveryCopy) {
    Connector c;
    c.kind = ConnectorKind::broadcast;
    ConnectorMetrics m;
    const auto out = run_connector(c, {"A"}, {{{I(1)}, {I(2)}}}, 3, &m);
    for (const auto& p : out) EXPECT_EQ(p.size(), 2u);
    EXPECT_EQ(m.tuples, 6u);
}

TEST(Dataset, RunSpillsPastItsBudgetAndReplaysInOrder) {
    SpillableRun r(64);
    for (std::int64_t i = 0; i < 100; ++i) r.append({I(i), Value(std::string("payload"))});
    EXPECT_TRUE(r.spilled());
    const auto v = r.to_vector();
    ASSERT_EQ(v.size(), 100u);
    for (std::int64_t i = 0; i < 100; ++i) EXPECT_EQ(v[static_cast<std::size_t>(i)][0], I(i));
}

TEST(Dataset, ClaimedLayoutIsChecked) {
    auto d = PartitionedDataset::hash_partitioned({{I(1)}, {I(2)}, {I(3)}}, {0}, 2);
    EXPECT_NO_THROW(d.check());
    std::swap(d.partitions[0], d.partitions[1]);
    EXPECT_THROW(d.check(), PropertyViolation);
}

TEST(VertexStore, UpdatesNullUpdatesAndUnknownIds) {
    VertexStore s("vertex", 2, 0);
    std::vector<std::vector<Tuple>> parts(2);
    for (std::int64_t k = 0; k < 6; ++k) parts[static_cast<std::size_t>(s.owner(I(k)))].push_back({I(k), I(0)});
    for (int p = 0; p < 2; ++p) s.bulk_load(p, parts[static_cast<std::size_t>(p)]);
    EXPECT_EQ(s.size(), 6u);
    s.stage(s.owner(I(3)), {I(3), I(30)});
    s.stage(s.owner(I(4)), {I(4), Value()});
    EXPECT_EQ(s.staged(), 1u);
    s.apply_staged();
    EXPECT_EQ((*s.find(I(3)))[1], I(30));
    EXPECT_EQ((*s.find(I(4)))[1], I(0));
    EXPECT_THROW(s.stage(1 - s.owner(I(5)), {I(5), I(1)}), PropertyViolation);
    std::int64_t fresh = 100;
    s.stage(s.owner(I(fresh)), {I(fresh), I(1)});
    EXPECT_THROW(s.apply_staged(), UnknownVertex);
}

TEST(VertexStore, BulkLoadRequiresStrictOrder) {
    VertexStore s("vertex", 1, 0);
    EXPECT_THROW(s.bulk_load(0, {{I(2)}, {I(1)}}), PropertyViolation);
    EXPECT_THROW(s.bulk_load(0, {{I(1)}, {I(1)}}), PropertyViolation);
}

TEST(Execute, TwoCycleRanksAreOneHalf) {
    const tasks::Graph g{{1}, {0}};
    const auto r = run_pagerank(g, cluster(2, 2));
    EXPECT_TRUE(r.halted);
    EXPECT_EQ(r.iterations_executed, 31);
    for (double x : ranks(r, 2)) EXPECT_NEAR(x, 0.5, 1e-12);
}

TEST(Execute, ThreeCycleRanksAreOneThird) {
    const tasks::Graph g{{1}, {2}, {0}};
    const auto r = run_pagerank(g, cluster(4, 2));
    for (double x : ranks(r, 3)) EXPECT_NEAR(x, 1.0 / 3, 1e-12);
}

TEST(Execute, MatchesPowerIterationWithDanglingVertices) {
    const tasks::Graph g{{1, 2}, {}, {0}, {0, 1, 2}, {}};
    const auto r = run_pagerank(g, cluster(2, 2));
    const auto want = tasks::power_iteration(g, 30);
    const auto got = ranks(r, g.size());
    for (std::size_t v = 0; v < g.size(); ++v) EXPECT_NEAR(got[v], want[v], 1e-12) << v;
}

TEST(Execute, UpdateRunsOncePerActiveVertexPerSuperstep) {
    const tasks::Graph g{{1, 2}, {2}, {0}, {}};
    const auto r = run_pagerank(g, cluster(2, 2), 5);
    ASSERT_FALSE(r.iterations.empty());
    for (const auto& m : r.iterations) {
        ASSERT_TRUE(m.active_count.has_value());
        EXPECT_EQ(m.udf_calls.at("update"), *m.active_count) << "iteration " << m.iter;
    }
}

TEST(Execute, ShadowStepDerivesNothingAfterTheHalt) {
    const auto r = run_pagerank({{1}, {0, 2}, {}}, cluster(2, 1), 4);
    EXPECT_TRUE(r.shadow.ran);
    EXPECT_EQ(r.shadow.derived, 0u);
}

TEST(Execute, ResultsDoNotDependOnWorkersOrConnector) {
    const tasks::Graph g{{1, 2, 3}, {2}, {0, 3}, {}, {0, 1}, {4}};
    const auto base = ranks(run_pagerank(g, cluster(1, 1)), g.size());
    auto alt = cluster(4, 2);
    alt.connector_choice = physical::ConnectorChoice::hash_then_sort;
    EXPECT_EQ(ranks(run_pagerank(g, cluster(4, 2)), g.size()), base);
    EXPECT_EQ(ranks(run_pagerank(g, alt), g.size()), base);
    auto nocomb = cluster(2, 2);
    nocomb.combiner_enabled = false;
    EXPECT_EQ(ranks(run_pagerank(g, nocomb), g.size()), base);
}

TEST(Execute, TinySpillBudgetGivesTheSameRanks) {
    const tasks::Graph g{{1, 2}, {2}, {0}, {0, 1, 2}};
    ExecOptions o;
    o.spill_budget_bytes = 128;
    o.batch_size = 2;
    o.queue_capacity = 1;
    EXPECT_EQ(ranks(run_pagerank(g, cluster(2, 2), 30, o), 4), ranks(run_pagerank(g, cluster(2, 2)), 4));
}

TEST(Execute, ImruHaltsWhenUpdateKeepsTheModel) {
    tasks::BgdConfig cfg;
    cfg.dim = 2;
    cfg.max_iters = 0;
    const std::vector<tasks::SparsePoint> pts{{1.0, {0}, {1.0}}, {-1.0, {1}, {2.0}}};
    const auto pp = tasks::plan_program(tasks::imru_program(), cluster(2, 1));
    const auto r = execute(pp, {{"training_data", tasks::bgd_input(pts, 2)}}, tasks::bgd_udfs(cfg));
    EXPECT_TRUE(r.halted);
    EXPECT_EQ(r.iterations_executed, 1);
    EXPECT_EQ(tasks::model_from(r.datasets.at("model")), (std::vector<double>{0.0, 0.0}));
    EXPECT_TRUE(r.shadow.ran);
    EXPECT_EQ(r.shadow.derived, 0u);
}

TEST(Execute, MaxItersBoundsARunThatWouldNotHalt) {
    ExecOptions o;
    o.limits.max_iters = 5;
    const auto r = run_pagerank({{1}, {0}}, cluster(1, 1), 30, o);
    EXPECT_FALSE(r.halted);
    EXPECT_EQ(r.iterations_executed, 5);
}

TEST(Execute, UdfFailureNamesTheOperator) {
    const auto pp = tasks::plan_program(tasks::pregel_program(), cluster(1, 1));
    Catalog cat{{"data", tasks::pagerank_input({{1}, {7}}, 1)}};
    tasks::PageRankConfig pc;
    pc.vertices = 2;
    try {
        execute(pp, cat, tasks::pagerank_udfs(pc));
        FAIL() << "expected a UdfError";
    } catch (const UdfError& e) {
        EXPECT_NE(std::string(e.what()).find("init_vertex"), std::string::npos) << e.what();
    }
}

TEST(Execute, MetricsRecordsAreOneJsonObjectPerLine) {
    const auto r = run_pagerank({{1}, {0}}, cluster(2, 1), 3);
    const auto text = r.metrics_jsonl();
    EXPECT_EQ(static_cast<int>(std::count(text.begin(), text.end(), '\n')), r.iterations_executed);
    EXPECT_NE(text.find("\"tuples_written\""), std::string::npos);
}
