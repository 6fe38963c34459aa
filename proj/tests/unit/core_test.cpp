#include <mpfr.h>

#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "dlflow/exact_sum.hpp"
#include "dlflow/graph.hpp"
#include "dlflow/value.hpp"

using namespace dlflow;

namespace {

// Correctly rounded sum via MPFR, independent of ExactSum.
double mpfr_reference_sum(const std::vector<double>& xs) {
    std::vector<mpfr_t> vals(xs.size());
    std::vector<mpfr_ptr> ptrs(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mpfr_init2(vals[i], 64);
        mpfr_set_d(vals[i], xs[i], MPFR_RNDN);
        ptrs[i] = vals[i];
    }
    mpfr_t out;
    mpfr_init2(out, 53);
    mpfr_sum(out, ptrs.data(), ptrs.size(), MPFR_RNDN);
    const double d = mpfr_get_d(out, MPFR_RNDN);
    mpfr_clear(out);
    for (auto& v : vals) mpfr_clear(v);
    return d;
}

Value sample_value() {
    return Value(ValueList{Value(3), Value(-2.5), Value("msg"), Value(), Value(true),
                           Value(DenseVector{1.0, -0.0, 1e300}), Value(ValueList{Value(7), Value(ValueList{})})});
}

}  // namespace

TEST(ValueTest, OrdersByKindThenContent) {
    EXPECT_LT(Value(), Value(false));
    EXPECT_LT(Value(false), Value(0));
    EXPECT_LT(Value(5), Value(0.5));  // integers sort before reals regardless of magnitude
    EXPECT_LT(Value("a"), Value("b"));
    EXPECT_LT(Value(DenseVector{1.0}), Value(DenseVector{1.0, 0.0}));
    EXPECT_EQ(Value(0.0), Value(-0.0));
    EXPECT_NE(Value(1), Value(1.0));
}

TEST(ValueTest, EqualValuesHashEqually) {
    EXPECT_EQ(Value(0.0).hash(), Value(-0.0).hash());
    EXPECT_EQ(sample_value().hash(), sample_value().hash());
    EXPECT_NE(Value(1).hash(), Value(2).hash());
}

TEST(ValueTest, EncodingRoundTrips) {
    const Value v = sample_value();
    std::string buf;
    v.encode(buf);
    EXPECT_EQ(buf.size(), v.encoded_size());
    std::string_view in(buf);
    EXPECT_EQ(Value::decode(in), v);
    EXPECT_TRUE(in.empty());

    const Tuple t{Value(1), Value("x"), v};
    std::string tb;
    encode_tuple(t, tb);
    EXPECT_EQ(tb.size(), encoded_size(t));
    std::string_view tin(tb);
    EXPECT_EQ(decode_tuple(tin), t);
}

TEST(ValueTest, TruncatedInputThrows) {
    std::string buf;
    Value(DenseVector{1.0, 2.0}).encode(buf);
    buf.pop_back();
    std::string_view in(buf);
    EXPECT_THROW(Value::decode(in), std::runtime_error);
}

TEST(ValueTest, AccessorsRejectWrongKind) {
    EXPECT_THROW(Value("s").as_int(), std::logic_error);
    EXPECT_DOUBLE_EQ(Value(3).as_number(), 3.0);
}

TEST(ExactSumTest, HandlesCancellation) {
    ExactSum s;
    for (double x : {1e100, 1.0, -1e100}) s.add(x);
    EXPECT_EQ(s.value(), 1.0);
}

TEST(ExactSumTest, MatchesMpfrOnRandomData) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> mant(-1.0, 1.0);
    std::uniform_int_distribution<int> expo(-60, 60);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> xs(1 + trial % 50);
        for (auto& x : xs) x = std::ldexp(mant(rng), expo(rng));
        ExactSum s;
        for (double x : xs) s.add(x);
        EXPECT_EQ(s.value(), mpfr_reference_sum(xs)) << "trial " << trial;
    }
}

TEST(ExactSumTest, IndependentOfOrderAndGrouping) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> dist(0.0, 1e6);
    std::vector<double> xs(500);
    for (auto& x : xs) x = dist(rng);
    ExactSum whole;
    for (double x : xs) whole.add(x);
    for (int round = 0; round < 10; ++round) {
        std::shuffle(xs.begin(), xs.end(), rng);
        ExactSum a, b;
        for (std::size_t i = 0; i < xs.size(); ++i) (i % 3 ? a : b).add(xs[i]);
        b.merge(a);
        EXPECT_EQ(b.value(), whole.value());
    }
}

TEST(ExactSumTest, RoundsHalfwayCasesToEven) {
    // 1 + 2^-53 is exactly halfway between 1 and the next double.
    const std::vector<double> xs{1.0, std::ldexp(1.0, -53), std::ldexp(1.0, -106)};
    ExactSum s;
    for (double x : xs) s.add(x);
    EXPECT_EQ(s.value(), mpfr_reference_sum(xs));
    EXPECT_GT(s.value(), 1.0);
}

TEST(GraphTest, FindsComponentsSinksFirst) {
    // 0 -> 1 -> 2 -> 0, 2 -> 3
    const std::vector<std::vector<int>> adj{{1}, {2}, {0, 3}, {}};
    const auto comps = strongly_connected_components(adj);
    ASSERT_EQ(comps.size(), 2u);
    EXPECT_EQ(comps[0], std::vector<int>{3});
    EXPECT_EQ(comps[1], (std::vector<int>{0, 1, 2}));
    const auto ids = component_ids(comps, 4);
    EXPECT_EQ(ids[0], ids[2]);
    EXPECT_NE(ids[0], ids[3]);
}
