#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "dlflow/datalog/parser.hpp"
#include "dlflow/logical/plan.hpp"
#include "dlflow/physical/plan.hpp"
#include "dlflow/tasks/templates.hpp"

using namespace dlflow;
using namespace dlflow::physical;

namespace {

std::string read_golden(const std::string& name) {
    std::ifstream in(std::string(DLFLOW_TEST_DATA) + "/golden/" + name);
    EXPECT_TRUE(in) << name;
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ClusterConfig cluster(int workers, int ppw) {
    ClusterConfig c;
    c.workers = workers;
    c.partitions_per_worker = ppw;
    return c;
}

PhysicalPlan pregel(const ClusterConfig& cfg) {
    const auto p = tasks::pregel_program();
    return optimize(logical::compile_logical(p), cfg, p);
}

PhysicalPlan imru(const ClusterConfig& cfg) {
    const auto p = tasks::imru_program();
    return optimize(logical::compile_logical(p), cfg, p);
}

std::vector<const PhysicalOperator*> find_ops(const Dataflow& df, OpKind k) {
    std::vector<const PhysicalOperator*> out;
    for (const auto& o : df.ops)
        if (o.kind == k) out.push_back(&o);
    return out;
}

const PhysicalOperator* find_label(const Dataflow& df, const std::string& label) {
    for (const auto& o : df.ops)
        if (o.label() == label) return &o;
    return nullptr;
}

bool has_rule(const PhysicalPlan& pp, const std::string& name) {
    for (const auto& r : pp.rules)
        if (r.name == name) return true;
    return false;
}

TEST(PhysicalGolden, PregelMatchesHandBuiltPlan) {
    const auto pp = pregel(cluster(2, 2));
    EXPECT_EQ(format_dataflows(pp), read_golden("pregel_physical.txt"));
}

TEST(PhysicalGolden, ImruMatchesHandBuiltPlan) {
    const auto pp = imru(cluster(2, 2));
    EXPECT_EQ(format_dataflows(pp), read_golden("imru_physical.txt"));
}

TEST(PhysicalGolden, OptimizerOutputValidates) {
    for (int w : {1, 2, 4})
        for (int ppw : {1, 2, 3}) {
            for (const auto& pp : {pregel(cluster(w, ppw)), imru(cluster(w, ppw))}) {
                const auto rep = validate_plan(pp);
                EXPECT_TRUE(rep.ok()) << w << "x" << ppw << "\n" << rep.to_string() << format_plan(pp);
            }
        }
}

TEST(PhysicalGolden, StorageDecisions) {
    const auto pp = pregel(cluster(2, 2));
    const auto* vertex = pp.find_storage("vertex");
    ASSERT_NE(vertex, nullptr);
    EXPECT_EQ(vertex->kind, StorageDecl::Kind::btree);
    EXPECT_EQ(vertex->key_positions, std::vector<int>{0});
    const auto* send = pp.find_storage("send");
    ASSERT_NE(send, nullptr);
    EXPECT_EQ(send->kind, StorageDecl::Kind::grouped);
    EXPECT_EQ(send->aggregate, "combine");
    EXPECT_EQ(send->value_position, 1);
    for (const char* rule : {"storage_selection", "shared_scan", "early_grouping", "join_selection", "order_property",
                             "connector_selection"})
        EXPECT_TRUE(has_rule(pp, rule)) << rule;
    EXPECT_TRUE(has_rule(imru(cluster(2, 2)), "aggregation_tree"));
}

TEST(PhysicalOptions, CombinerOffDropsPartialAggregation) {
    auto cfg = cluster(2, 2);
    cfg.combiner_enabled = false;
    const auto pp = pregel(cfg);
    for (const auto* g : find_ops(pp.step, OpKind::preclustered_group_by)) EXPECT_EQ(g->phase, AggPhase::complete);
    const auto* g = find_label(pp.step, "preclustered_group_by([Id], combine<M>, complete)");
    ASSERT_NE(g, nullptr);
    EXPECT_EQ(g->inputs[0].connector.kind, ConnectorKind::m_to_n_hash_merge);
    EXPECT_FALSE(has_rule(pp, "early_grouping"));
    EXPECT_TRUE(validate_plan(pp).ok());

    const auto ip = imru(cfg);
    const auto alls = find_ops(ip.step, OpKind::group_all);
    ASSERT_EQ(alls.size(), 1u);
    EXPECT_EQ(alls[0]->phase, AggPhase::complete);
    EXPECT_EQ(alls[0]->partitions, 1);
    EXPECT_EQ(alls[0]->inputs[0].connector.kind, ConnectorKind::aggregate_to_one);
}

TEST(PhysicalOptions, HashThenSortPutsSortBeforeFinal) {
    auto cfg = cluster(2, 2);
    cfg.connector_choice = ConnectorChoice::hash_then_sort;
    const auto pp = pregel(cfg);
    const auto* fin = find_label(pp.step, "preclustered_group_by([Id], combine<M>, final)");
    ASSERT_NE(fin, nullptr);
    const auto& sort = pp.step.op(fin->inputs[0].op);
    EXPECT_EQ(sort.kind, OpKind::sort);
    EXPECT_EQ(fin->inputs[0].connector.kind, ConnectorKind::one_to_one);
    EXPECT_EQ(sort.inputs[0].connector.kind, ConnectorKind::m_to_n_hash);
    EXPECT_EQ(pp.step.op(sort.inputs[0].op).phase, AggPhase::partial);
    EXPECT_TRUE(find_ops(pp.step, OpKind::preclustered_group_by).size() == 2);
    EXPECT_TRUE(validate_plan(pp).ok()) << validate_plan(pp).to_string();
}

std::vector<int> layer_sizes(const PhysicalPlan& pp) {
    std::vector<int> out;
    for (const auto* g : find_ops(pp.step, OpKind::group_all)) out.push_back(g->partitions);
    return out;
}

TEST(PhysicalOptions, AggregationTreeShapes) {
    auto cfg = cluster(16, 1);
    cfg.agg_tree = AggTree::flat;
    EXPECT_EQ(layer_sizes(imru(cfg)), (std::vector<int>{16, 1}));
    cfg.agg_tree = AggTree::sqrt_layer;
    EXPECT_EQ(layer_sizes(imru(cfg)), (std::vector<int>{16, 4, 1}));
    parse_agg_tree("fanin:2", cfg);
    EXPECT_EQ(layer_sizes(imru(cfg)), (std::vector<int>{16, 8, 4, 2, 1}));
    parse_agg_tree("fanin:4", cfg);
    EXPECT_EQ(layer_sizes(imru(cfg)), (std::vector<int>{16, 4, 1}));
    EXPECT_TRUE(validate_plan(imru(cfg)).ok());
    cfg = cluster(1, 1);
    EXPECT_EQ(layer_sizes(imru(cfg)), (std::vector<int>{1}));
    EXPECT_THROW(parse_agg_tree("fanin:1", cfg), std::invalid_argument);
    EXPECT_THROW(parse_agg_tree("deep", cfg), std::invalid_argument);
}

TEST(PhysicalOptions, BadClusterShapeIsRejected) {
    const auto p = tasks::pregel_program();
    const auto lp = logical::compile_logical(p);
    EXPECT_THROW(optimize(lp, cluster(0, 1), p), std::invalid_argument);
    EXPECT_THROW(optimize(lp, cluster(1, 0), p), std::invalid_argument);
}

TEST(PhysicalSmall, NonrecursiveCopy) {
    const auto p = datalog::parse_program(".decl in/1\nr1: out(X) :- in(X).\n");
    const auto pp = optimize(logical::compile_logical(p), cluster(2, 1), p);
    EXPECT_EQ(format_dataflows(pp), "init:\n"
                                    "O1 file_scan(in) p=2 : (X) {r1}\n"
                                    "O2 dataset_write(out) p=2 <- O1 one_to_one : (X) {r1}\n"
                                    "step:\n"
                                    "recursive: \n"
                                    "halt: none\n");
    EXPECT_TRUE(validate_plan(pp).ok());
}

TEST(PhysicalSmall, PlainJoinBecomesHashJoin) {
    const auto p = datalog::parse_program(".decl a/2\n.decl b/2\nr1: c(X, Z) :- a(X, Y), b(Y, Z).\n");
    const auto pp = optimize(logical::compile_logical(p), cluster(2, 2), p);
    const auto joins = find_ops(pp.init, OpKind::hash_join);
    ASSERT_EQ(joins.size(), 1u);
    for (const auto& in : joins[0]->inputs) {
        EXPECT_EQ(in.connector.kind, ConnectorKind::m_to_n_hash);
        EXPECT_EQ(in.connector.keys, std::vector<std::string>{"Y"});
    }
    EXPECT_TRUE(validate_plan(pp).ok()) << validate_plan(pp).to_string();
}

// A two-operator plan built by hand: scan, then a group-by.
PhysicalPlan hand_plan(ConnectorKind kind) {
    PhysicalPlan pp;
    pp.config = cluster(2, 1);
    PhysicalOperator scan;
    scan.id = 0;
    scan.kind = OpKind::file_scan;
    scan.partitions = 2;
    scan.dataset.name = "edges";
    scan.schema = {"K", "V"};
    scan.rule = "r1";
    PhysicalOperator g;
    g.id = 1;
    g.kind = OpKind::preclustered_group_by;
    g.partitions = 2;
    g.keys = {"K"};
    g.udf = "sum";
    g.aggregate_over = "V";
    g.schema = {"K", "V"};
    g.rule = "r1";
    PhysInput in;
    in.op = 0;
    in.connector.kind = kind;
    in.connector.keys = {"K"};
    g.inputs = {in};
    PhysicalOperator w;
    w.id = 2;
    w.kind = OpKind::dataset_write;
    w.partitions = 2;
    w.dataset.name = "out";
    w.schema = {"K", "V"};
    w.rule = "r1";
    PhysInput win;
    win.op = 1;
    win.connector.kind = ConnectorKind::one_to_one;
    w.inputs = {win};
    pp.init.ops = {scan, g, w};
    return pp;
}

TEST(PhysicalValidate, GroupByWithoutSortIsReported) {
    const auto rep = validate_plan(hand_plan(ConnectorKind::m_to_n_hash));
    EXPECT_TRUE(rep.has("sortedness")) << rep.to_string();
    EXPECT_FALSE(rep.has("partitioning")) << rep.to_string();
}

TEST(PhysicalValidate, MissingConnectorIsReported) {
    const auto rep = validate_plan(hand_plan(ConnectorKind::none));
    EXPECT_TRUE(rep.has("connectivity")) << rep.to_string();
}

TEST(PhysicalValidate, OneToOneAcrossPartitionCountsIsReported) {
    auto pp = hand_plan(ConnectorKind::m_to_n_hash);
    pp.init.ops[2].partitions = 1;
    EXPECT_TRUE(validate_plan(pp).has("partitioning"));
}

TEST(PhysicalValidate, UnknownHashKeyIsReported) {
    auto pp = hand_plan(ConnectorKind::m_to_n_hash);
    pp.init.ops[1].inputs[0].connector.keys = {"Nope"};
    EXPECT_TRUE(validate_plan(pp).has("schema"));
}

TEST(PhysicalValidate, DroppingTheHoistedSortBreaksTheBulkLoad) {
    auto pp = pregel(cluster(2, 2));
    // O2 is the sort after the scan; skip it.
    auto& call = pp.init.ops[2];
    ASSERT_EQ(call.kind, OpKind::function_call);
    call.inputs[0].op = 0;
    const auto rep = validate_plan(pp);
    EXPECT_TRUE(rep.has("sortedness")) << rep.to_string();
    EXPECT_TRUE(rep.has("connectivity")) << rep.to_string();
}

}  // namespace
