#include "wmg/generators.hpp"
#include "wmg/kemeny.hpp"

#include <gtest/gtest.h>

using namespace wmg;

TEST(Kemeny, SwapChainFixture) {
    const auto s = kemeny_constants(swap_graph());
    EXPECT_NEAR(s.K, 3.75, 1e-12);
    EXPECT_NEAR(s.K_W, 3.8, 1e-12);
    EXPECT_NEAR(s.V_scalar, 0.0, 1e-12);
    EXPECT_NEAR(s.V_W, 0.0, 1e-12);
    EXPECT_NEAR(s.S, 0.0, 1e-6);
    EXPECT_NEAR(s.R, 0.5, 1e-12);
}

TEST(Kemeny, CycleFormula) {
    for (int n : {3, 5, 8}) {
        const auto s = kemeny_constants(cycle_graph(n));
        EXPECT_NEAR(s.K, (n + 1) / 2.0, 1e-12) << n;
        EXPECT_NEAR(s.S, 0.0, 1e-6);
    }
}

TEST(Kemeny, ThreeCycleResistance) {
    EXPECT_NEAR(kemeny_constants(cycle_graph(3)).R, 1.5, 1e-12);
}

TEST(Kemeny, ResistanceScales) {
    const auto g = random_graph(2, {.n = 5});
    const Matrix L = mean_passage_lengths(analyze_chain(g));
    EXPECT_NEAR(graph_resistance(3.0 * L, g.num_edges()), 3.0 * graph_resistance(L, g.num_edges()), 1e-12);
}

TEST(Kemeny, TraceIdentityOnRandomGraphs) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto g = random_graph(seed, {.n = 3 + static_cast<int>(seed % 6), .stochastic_fraction = 0.3});
        const auto a = analyze_chain(g);
        const Matrix M = weighted_mean_passage(a, g.W());
        EXPECT_LE(std::abs(a.pi.dot(M * a.pi) - kemeny_trace_form(a, g.W())), 1e-9) << seed;
    }
}

TEST(Kemeny, LinearInWeightsButKWIsNot) {
    const auto g = random_graph(31, {.n = 5});
    const auto a = analyze_chain(g);
    const Matrix W1 = g.W();
    Matrix W2 = g.support_mask();
    W2.row(0) *= 5.0;
    const double alpha = 0.4, beta = 0.6;
    const double K = kemeny_trace_form(a, alpha * W1 + beta * W2);
    EXPECT_NEAR(K, alpha * kemeny_trace_form(a, W1) + beta * kemeny_trace_form(a, W2), 1e-10);

    auto kw = [&](const Matrix& W) {
        const auto b = analyze_chain(g.P(), W);
        return b.pi_w.dot(weighted_mean_passage(b, W) * b.pi_w);
    };
    EXPECT_GT(std::abs(kw(alpha * W1 + beta * W2) - (alpha * kw(W1) + beta * kw(W2))), 1e-6);
}

TEST(Kemeny, UnitWeightsClassicalForm) {
    const auto g = random_graph(8, {.n = 6});
    const auto a = analyze_chain(g);
    const Matrix L = mean_passage_lengths(a);
    EXPECT_NEAR(kemeny_trace_form(a, g.support_mask()), a.pi.dot(L * a.pi), 1e-10);
}

TEST(Kemeny, SurpriseIndexInvariantUnderScaling) {
    const auto g = random_graph(12, {.n = 5});
    const auto base = kemeny_constants(g);
    const auto scaled = kemeny_constants(g.with_weights(3.0 * g.W()));
    EXPECT_NEAR(base.S, scaled.S, 1e-10);
    EXPECT_NEAR(scaled.K_W, 3.0 * base.K_W, 1e-9);
}

TEST(SurpriseIndex, PaperRows) {
    EXPECT_NEAR(surprise_index(28.69, 29.98 * 29.98), 1.045, 5e-4);
    EXPECT_NEAR(surprise_index(202.58, 254.16 * 254.16), 1.255, 5e-4);
    EXPECT_EQ(surprise_index(4.0, -1e-12), 0.0);
    EXPECT_THROW(surprise_index(0.0, 1.0), Error);
}

TEST(Kemeny, ScalarsNonNegative) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto s = kemeny_constants(random_graph(seed, {.n = 5, .stochastic_fraction = 0.5}));
        EXPECT_GT(s.K, 0.0);
        EXPECT_GT(s.K_W, 0.0);
        EXPECT_GE(s.V_scalar, 0.0);
        EXPECT_GE(s.V_W, 0.0);
    }
}
