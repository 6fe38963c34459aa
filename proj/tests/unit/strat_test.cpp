#include <gtest/gtest.h>

#include "dlflow/datalog/parser.hpp"
#include "dlflow/datalog/printer.hpp"
#include "dlflow/strat/strat.hpp"
#include "dlflow/tasks/templates.hpp"

using namespace dlflow;
using namespace dlflow::strat;
using datalog::parse_program;

namespace {

std::string strip_ws(const std::string& s) {
    std::string out;
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
    return out;
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
    const auto pos = s.find(from);
    EXPECT_NE(pos, std::string::npos) << from;
    if (pos != std::string::npos) s.replace(pos, from.size(), to);
    return s;
}

std::vector<std::string> ids(const Program& p, const std::vector<std::size_t>& rules) {
    std::vector<std::string> out;
    for (auto i : rules) out.push_back(p.rules[i].id(i));
    return out;
}

}  // namespace

TEST(DependencyGraphTest, ImruEdges) {
    const auto g = build_dependency_graph(tasks::imru_program());
    EXPECT_TRUE(g.has_edge("model", "collect", EdgeKind::aggregated));
    EXPECT_TRUE(g.has_edge("collect", "model", EdgeKind::positive));
    EXPECT_TRUE(g.has_edge("map", "collect", EdgeKind::aggregated));
    EXPECT_TRUE(g.has_node("training_data"));
    EXPECT_FALSE(g.has_node("!="));
}

TEST(DependencyGraphTest, SingleNonrecursiveRule) {
    const auto g = build_dependency_graph(parse_program(".decl in/1\nout(X) :- in(X)."));
    EXPECT_EQ(g.nodes.size(), 2u);
    ASSERT_EQ(g.edges.size(), 1u);
    EXPECT_EQ(g.edges[0], (DepEdge{"in", "out", EdgeKind::positive}));
}

TEST(DependencyGraphTest, PregelCycleThroughAggregation) {
    const auto g = build_dependency_graph(tasks::pregel_program());
    EXPECT_TRUE(g.has_edge("vertex", "maxVertexJ", EdgeKind::aggregated));
    EXPECT_TRUE(g.has_edge("maxVertexJ", "local", EdgeKind::positive));
    EXPECT_TRUE(g.has_edge("local", "superstep", EdgeKind::positive));
    EXPECT_TRUE(g.has_edge("superstep", "vertex", EdgeKind::positive));
    EXPECT_TRUE(g.has_edge("send", "collect", EdgeKind::aggregated));
}

TEST(ClassifyTest, ImruRules) {
    const auto c = classify_rules(tasks::imru_program());
    ASSERT_EQ(c.size(), 3u);
    EXPECT_EQ(c[0].tag, RuleClass::Tag::x_rule);
    EXPECT_EQ(c[1].tag, RuleClass::Tag::x_rule);
    EXPECT_EQ(c[2].tag, RuleClass::Tag::y_rule);
}

TEST(ClassifyTest, PregelRules) {
    const auto c = classify_rules(tasks::pregel_program());
    ASSERT_EQ(c.size(), 8u);
    for (int i = 0; i < 6; ++i) EXPECT_EQ(c[i].tag, RuleClass::Tag::x_rule) << i;
    EXPECT_EQ(c[6].tag, RuleClass::Tag::y_rule);
    EXPECT_EQ(c[7].tag, RuleClass::Tag::y_rule);
}

TEST(ClassifyTest, HeadAtCurrentStateBreaksYClauseOne) {
    const std::string text = replace(std::string(tasks::imru_template_text()), "model(J+1, NewM)", "model(J, NewM)");
    const auto c = classify_rules(parse_program(text));
    EXPECT_TRUE(c[0].ok());
    EXPECT_TRUE(c[1].ok());
    EXPECT_EQ(c[2].tag, RuleClass::Tag::ill_formed);
    EXPECT_EQ(c[2].clause, "Y-rule clause 1");
}

TEST(TransformTest, ImruMatchesPublishedListing) {
    const Program t = xy_transform(tasks::imru_program());
    const std::string expected =
        "G1: new_model(M) :- init_model(M).\n"
        "G2: new_collect(reduce<S>) :- new_model(M),\n"
        "  training_data(Id, R), map(R, M, S).\n"
        "G3: new_model(NewM) :-\n"
        "  old_collect(AggrS), old_model(M),\n"
        "  old_update(M, AggrS, NewM), M != NewM.\n";
    EXPECT_EQ(strip_ws(datalog::print_rules(t)), strip_ws(expected));
}

TEST(TransformTest, NonrecursiveProgramUnchanged) {
    const Program p = parse_program(".decl in/1\nout(X) :- in(X).\nout2(X) :- out(X).");
    EXPECT_EQ(datalog::print_rules(xy_transform(p)), datalog::print_rules(p));
}

TEST(TransformTest, PregelHasTwoStrata) {
    const Program t = xy_transform(tasks::pregel_program());
    const auto s = stratify(t);
    ASSERT_TRUE(s.ok());
    EXPECT_EQ(s.strata->count, 2);
    const auto& a = s.strata->assignment;
    EXPECT_EQ(a.at("new_vertex"), 0);
    EXPECT_EQ(a.at("new_send"), 0);
    EXPECT_EQ(a.at("new_collect"), 1);
    EXPECT_EQ(a.at("new_maxVertexJ"), 1);
    EXPECT_EQ(a.at("new_local"), 1);
    EXPECT_EQ(a.at("new_superstep"), 1);
    EXPECT_EQ(datalog::print_rule(t.rules[3]), "L4: new_maxVertexJ(Id, max<J>) :- new_vertex(Id, State).");
    EXPECT_EQ(datalog::print_rule(t.rules[6]), "L7: new_vertex(Id, State) :- old_superstep(Id, State, _), State != null.");
}

TEST(TransformTest, RejectsIllFormed) {
    const std::string text = replace(std::string(tasks::imru_template_text()), "model(J+1, NewM)", "model(J, NewM)");
    EXPECT_THROW(xy_transform(parse_program(text)), IllFormedProgram);
}

TEST(StratifyTest, ImruTwoStrataCollectOnTop) {
    const Program t = xy_transform(tasks::imru_program());
    const auto s = stratify(t);
    ASSERT_TRUE(s.ok());
    EXPECT_EQ(s.strata->count, 2);
    EXPECT_EQ(s.strata->assignment.at("new_collect"), 1);
    EXPECT_EQ(s.strata->assignment.at("new_model"), 0);
    EXPECT_TRUE(check_strata_invariants(build_dependency_graph(t), *s.strata));
}

TEST(StratifyTest, NegationSelfCycleFails) {
    const auto s = stratify(parse_program("p(X) :- !p(X)."));
    ASSERT_FALSE(s.ok());
    EXPECT_EQ(s.cycle, std::vector<std::string>{"p"});
}

TEST(StratifyTest, ReportsLongerCycle) {
    const auto s = stratify(parse_program(".decl e/1\np(X) :- e(X), !q(X).\nq(X) :- p(X)."));
    ASSERT_FALSE(s.ok());
    EXPECT_EQ(s.cycle, (std::vector<std::string>{"q", "p"}));
}

TEST(StratifyTest, InvariantCheckerCatchesViolations) {
    DependencyGraph g;
    g.nodes = {"a", "b"};
    g.edges = {{"a", "b", EdgeKind::aggregated}};
    Strata s;
    s.assignment = {{"a", 0}, {"b", 0}};
    std::string why;
    EXPECT_FALSE(check_strata_invariants(g, s, &why));
    EXPECT_NE(why.find("aggregated"), std::string::npos);
    s.assignment["b"] = 1;
    EXPECT_TRUE(check_strata_invariants(g, s));
}

TEST(VerdictTest, TemplatesAreXYStratified) {
    for (const Program& p : {tasks::pregel_program(), tasks::imru_program()}) {
        const auto v = check_xy(p);
        EXPECT_TRUE(v.stratified) << v.reason;
        ASSERT_TRUE(v.strata.has_value());
        EXPECT_TRUE(check_strata_invariants(build_dependency_graph(*v.transformed), *v.strata));
    }
}

TEST(VerdictTest, ImruSchedule) {
    const Program p = tasks::imru_program();
    const auto v = check_xy(p);
    EXPECT_EQ(ids(p, v.schedule.init), std::vector<std::string>{"G1"});
    EXPECT_EQ(ids(p, v.schedule.step), (std::vector<std::string>{"G2", "G3"}));
}

TEST(VerdictTest, PregelSchedule) {
    const Program p = tasks::pregel_program();
    const auto v = check_xy(p);
    EXPECT_EQ(ids(p, v.schedule.init), (std::vector<std::string>{"L1", "L2"}));
    EXPECT_EQ(ids(p, v.schedule.step), (std::vector<std::string>{"L3", "L4", "L5", "L6", "L7", "L8"}));
}

TEST(VerdictTest, FormatMentionsScheduleAndStrata) {
    const Program p = tasks::imru_program();
    const std::string text = format_verdict(p, check_xy(p));
    EXPECT_NE(text.find("verdict: xy-stratified"), std::string::npos);
    EXPECT_NE(text.find("strata: 2"), std::string::npos);
    EXPECT_NE(text.find("step: G2, G3"), std::string::npos);
}

struct Mutation {
    const char* name;
    bool pregel;
    const char* from;
    const char* to;
    const char* clause;
};

void PrintTo(const Mutation& m, std::ostream* os) { *os << m.name; }

class MutationTest : public ::testing::TestWithParam<Mutation> {};

TEST_P(MutationTest, IsRejectedWithClause) {
    const Mutation& m = GetParam();
    const std::string base(m.pregel ? tasks::pregel_template_text() : tasks::imru_template_text());
    const Program p = parse_program(replace(base, m.from, m.to));
    const auto v = check_xy(p);
    EXPECT_FALSE(v.stratified);
    EXPECT_NE(v.reason.find(m.clause), std::string::npos) << v.reason;
}

INSTANTIATE_TEST_SUITE_P(
    Clauses, MutationTest,
    ::testing::Values(
        Mutation{"ImruHeadOffsetZero", false, "model(J+1, NewM)", "model(J, NewM)", "Y-rule clause 1"},
        Mutation{"PregelVertexHeadOffsetZero", true, "vertex(J+1, Id, State)", "vertex(J, Id, State)", "Y-rule clause 1"},
        Mutation{"PregelSendHeadOffsetZero", true, "send(J+1, Id, M)", "send(J, Id, M)", "Y-rule clause 1"},
        Mutation{"ImruNoCurrentGoal", false, "collect(J, AggrS), model(J, M),\n   update(J, M",
                 "collect(J+1, AggrS), model(J+1, M),\n   update(J+1, M", "Y-rule clause 2"},
        Mutation{"PregelNoCurrentGoal", true, "superstep(J, Id, State, _)", "superstep(J+1, Id, State, _)",
                 "Y-rule clause 2"},
        Mutation{"ImruNegationSelfCycle", false, "M != NewM.", "M != NewM, !model(J+1, NewM).", "stratification"},
        Mutation{"ImruGoalAtConstantState", false, "collect(J, AggrS), model(J, M)", "collect(J, AggrS), model(0, M)",
                 "Y-rule clause 3"}),
    [](const auto& info) { return std::string(info.param.name); });
