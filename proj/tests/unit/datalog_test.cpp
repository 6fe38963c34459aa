#include <gtest/gtest.h>

#include "dlflow/datalog/analysis.hpp"
#include "dlflow/datalog/parser.hpp"
#include "dlflow/datalog/printer.hpp"
#include "dlflow/datalog/validate.hpp"
#include "dlflow/tasks/templates.hpp"

using namespace dlflow;
using namespace dlflow::datalog;

TEST(ParseTest, InitRuleHasConstantStateAndFunctionBody) {
    const Program p = parse_program(
        ".udf init_model/0 -> 1\n"
        "model(0, M) :- init_model(M).\n");
    ASSERT_EQ(p.rules.size(), 1u);
    const Rule& r = p.rules[0];
    EXPECT_EQ(r.head.predicate, "model");
    EXPECT_EQ(r.head.arity(), 2u);
    EXPECT_TRUE(r.head.args[0].is_constant());
    EXPECT_EQ(r.head.args[0].value, Value(0));
    ASSERT_EQ(r.body.size(), 1u);
    EXPECT_EQ(r.body[0].role, AtomRole::function);
    const UdfDecl* u = p.find_udf("init_model");
    ASSERT_NE(u, nullptr);
    EXPECT_EQ(u->input_arity, 0u);
    EXPECT_EQ(u->output_arity, 1u);
}

TEST(ParseTest, ImruTemplateInitRuleIsAtStateZero) {
    const Program p = tasks::imru_program();
    ASSERT_EQ(p.rules.size(), 3u);
    const Rule& g1 = p.rules[0];
    EXPECT_EQ(g1.label, "G1");
    ASSERT_TRUE(g1.temporal.has_value());
    EXPECT_EQ(g1.temporal->constant_state, 0u);
    const Rule& g3 = p.rules[2];
    ASSERT_TRUE(g3.temporal.has_value());
    EXPECT_EQ(g3.temporal->var, "J");
    EXPECT_EQ(g3.temporal->head_offset, 1);
}

TEST(ParseTest, EmptyTextGivesEmptyProgram) {
    EXPECT_TRUE(parse_program("").rules.empty());
    EXPECT_TRUE(parse_program("  % only a comment\n").rules.empty());
}

TEST(ParseTest, DanglingCommaReportsItsPosition) {
    try {
        parse_program(".decl q/1\np(X) :- q(X),");
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2);
        EXPECT_EQ(e.column(), 13);
        EXPECT_NE(std::string(e.what()).find("dangling"), std::string::npos);
    }
}

TEST(ParseTest, ReportsArityMismatch) {
    EXPECT_THROW(parse_program(".decl q/1\np(X) :- q(X, X)."), ParseError);
    EXPECT_THROW(parse_program(".decl q/1\np(X) :- q(X).\nr(X) :- p(X, X)."), ParseError);
}

TEST(ParseTest, ReportsUndeclaredUdf) {
    try {
        parse_program(".decl q/1\np(Y) :- q(X), f(X, Y).");
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("'f'"), std::string::npos);
        EXPECT_EQ(e.line(), 2);
        EXPECT_EQ(e.column(), 15);
    }
}

TEST(ParseTest, OnlySuccessorFormAllowed) {
    EXPECT_THROW(parse_program(".decl q/1\np(J+2) :- q(J)."), ParseError);
}

TEST(ParseTest, SetAndTupleTermsInBody) {
    const Program p = tasks::pregel_program();
    const Rule& l8 = p.rules.back();
    const Term& set = l8.body[0].args[3];
    ASSERT_EQ(set.kind, Term::Kind::set_of);
    ASSERT_EQ(set.items[0].kind, Term::Kind::tuple_of);
    EXPECT_EQ(set.items[0].items.size(), 2u);
}

TEST(ParseTest, ConstantsAndComparisons) {
    const Program p = tasks::pregel_program();
    const Rule& l2 = p.rules[1];
    EXPECT_TRUE(l2.head.args[2].is_constant());
    EXPECT_EQ(l2.head.args[2].value, Value("ACTIVATION_MSG"));
    const Rule& l7 = p.rules[6];
    EXPECT_EQ(l7.body[1].role, AtomRole::comparison);
    EXPECT_EQ(l7.body[1].predicate, "!=");
    EXPECT_TRUE(l7.body[1].args[1].value.is_null());
}

TEST(ParseTest, HeadAggregatePosition) {
    const Program p = tasks::pregel_program();
    const Rule& l3 = p.rules[2];
    ASSERT_TRUE(l3.aggregate.present);
    EXPECT_EQ(l3.aggregate.name, "combine");
    EXPECT_EQ(l3.aggregate.position, 2u);
    EXPECT_EQ(l3.aggregate.over.name, "Msg");
}

TEST(AnalysisTest, PregelTemporalAndViews) {
    const Program p = tasks::pregel_program();
    const ProgramInfo info = analyze_program(p);
    for (const char* t : {"vertex", "send", "collect", "superstep"}) EXPECT_TRUE(info.is_temporal(t)) << t;
    for (const char* v : {"maxVertexJ", "local"}) EXPECT_TRUE(info.is_view(v)) << v;
    EXPECT_FALSE(info.is_recursive("data"));
    EXPECT_TRUE(p.rules[3].temporal->head_untimed);
}

TEST(ValidateTest, TemplatesAreWellFormed) {
    EXPECT_TRUE(validate(tasks::pregel_program()).ok()) << validate(tasks::pregel_program()).to_string();
    EXPECT_TRUE(validate(tasks::imru_program()).ok()) << validate(tasks::imru_program()).to_string();
}

TEST(ValidateTest, RangeRestriction) {
    const auto report = validate(parse_program(".decl q/1\np(X, Y) :- q(X)."));
    EXPECT_TRUE(report.has("range_restriction"));
}

TEST(ValidateTest, UnknownAggregate) {
    const auto report = validate(parse_program(".decl send/2\ncollect(Id, combine<Msg>) :- send(Id, Msg)."));
    EXPECT_TRUE(report.has("unknown_aggregate"));
    EXPECT_TRUE(validate(parse_program(".decl e/2\nm(X, max<Y>) :- e(X, Y).")).ok());
}

TEST(ValidateTest, UnsafeNegationAndComparison) {
    EXPECT_TRUE(validate(parse_program(".decl q/1\n.decl r/1\np(X) :- q(X), !r(Y).")).has("unsafe_negation"));
    EXPECT_TRUE(validate(parse_program(".decl q/1\np(X) :- q(X), X != Y.")).has("unbound_comparison"));
}

TEST(ValidateTest, FunctionInputsMustBeBound) {
    const auto report = validate(parse_program(".decl q/1\n.udf f/1 -> 1\np(Y) :- q(X), f(Z, Y)."));
    EXPECT_TRUE(report.has("unbound_function_input"));
}

TEST(ValidateTest, SetTermsOnlyInBodies) {
    EXPECT_TRUE(validate(parse_program(".decl q/1\np({X}) :- q(X).")).has("set_in_head"));
}

namespace {

void expect_round_trip(const Program& p) {
    const std::string printed = print_program(p);
    const Program again = parse_program(printed);
    EXPECT_EQ(again, p) << printed;
    EXPECT_EQ(print_program(again), printed);
}

}  // namespace

TEST(PrinterTest, RoundTripsTemplates) {
    expect_round_trip(tasks::pregel_program());
    expect_round_trip(tasks::imru_program());
}

TEST(PrinterTest, RoundTripsAssortedSyntax) {
    expect_round_trip(parse_program(
        ".decl e/3\n.udf f/2 -> 1\n.aggregate agg\n.const K\n"
        "r1: p(X, \"s\\\"q\", -3, 2.5, true, K) :- e(X, _, Y), f(X, Y, Z), Z >= 1e-5, !q(X).\n"
        "q(X) :- e(X, foo, null).\n"
        "w(X, agg<Y>) :- e(X, Y, {(A, B)}).\n"
        "z.\n"));
}

TEST(PrinterTest, CanonicalForm) {
    const Program p = parse_program(".udf init_model/0 -> 1\nG1:model( 0,M ):-init_model( M ).");
    EXPECT_EQ(print_rules(p), "G1: model(0, M) :- init_model(M).\n");
}
