#include "wmg/chain.hpp"
#include "wmg/generators.hpp"

#include <gtest/gtest.h>

using namespace wmg;

TEST(Stationary, SwapChain) {
    Matrix P(2, 2);
    P << 0, 1, 1, 0;
    const Vector pi = stationary_of(P);
    EXPECT_NEAR(pi(0), 0.5, 1e-15);
    EXPECT_NEAR(pi(1), 0.5, 1e-15);
}

TEST(Stationary, ThreeCycle) {
    const Vector pi = stationary_of(cycle_graph(3).P());
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(pi(i), 1.0 / 3.0, 1e-15);
}

TEST(Stationary, LazyTwoState) {
    Matrix P(2, 2);
    P << 0.5, 0.5, 0.25, 0.75;
    const Vector pi = stationary_of(P);
    EXPECT_NEAR(pi(0), 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(pi(1), 2.0 / 3.0, 1e-15);
    EXPECT_LE((pi.transpose() * P - pi.transpose()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Stationary, ReducibleNamesPair) {
    Matrix P(3, 3);
    P << 0, 1, 0, 1, 0, 0, 0, 0.5, 0.5;
    try {
        stationary_of(P);
        FAIL() << "expected ReducibleChainError";
    } catch (const ReducibleChainError& e) {
        EXPECT_EQ(e.from(), 0);
        EXPECT_EQ(e.to(), 2);
    }
}

TEST(AnalyzeChain, SwapChainFundamentalMatrix) {
    const auto a = analyze_chain(swap_graph());
    EXPECT_NEAR(a.Z(0, 0), 0.75, 1e-15);
    EXPECT_NEAR(a.Z(0, 1), 0.25, 1e-15);
    EXPECT_NEAR(a.Z(1, 0), 0.25, 1e-15);
    EXPECT_NEAR(a.Z(1, 1), 0.75, 1e-15);
    EXPECT_NEAR(a.trace_Z(), 1.5, 1e-15);
    EXPECT_NEAR(a.Ubar(0), 2.0, 1e-15);
    EXPECT_NEAR(a.Ubar(1), 3.0, 1e-15);
    EXPECT_NEAR(a.Y, 2.5, 1e-15);
    EXPECT_NEAR(a.pi_w(0), 0.4, 1e-15);
    EXPECT_NEAR(a.pi_w(1), 0.6, 1e-15);
}

TEST(AnalyzeChain, UniformMixing) {
    const int n = 6;
    const Matrix H = uniform_mixing_matrix(n);
    const auto a = analyze_chain(H, H);
    EXPECT_LE((a.pi.array() - 1.0 / n).abs().maxCoeff(), 1e-15);
    EXPECT_LE((a.Z * Vector::Ones(n) - Vector::Ones(n)).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LE((a.pi.transpose() * a.Z - a.pi.transpose()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(AnalyzeChain, IdentitiesOnRandomGraphs) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        RandomGraphOptions o;
        o.n = 2 + static_cast<int>(seed % 9);
        const auto g = random_graph(seed, o);
        const auto a = analyze_chain(g);
        const int n = g.n();
        const Matrix I = Matrix::Identity(n, n);
        EXPECT_LE((a.pi.transpose() * a.P - a.pi.transpose()).cwiseAbs().maxCoeff(), 1e-12) << seed;
        EXPECT_LE(((I - a.P) * a.Z - (I - a.Pi)).cwiseAbs().maxCoeff(), 1e-9) << seed;
        EXPECT_LE((a.Z * Vector::Ones(n) - Vector::Ones(n)).cwiseAbs().maxCoeff(), 1e-10) << seed;
        EXPECT_NEAR(a.pi_w.sum(), 1.0, 1e-12);
        EXPECT_GT(a.pi.minCoeff(), 0.0);
    }
}

TEST(AnalyzeChain, ConstantWeightsGivePiW) {
    const auto g = random_graph(7, {});
    const auto a = analyze_chain(g.P(), 4.0 * g.support_mask());
    EXPECT_LE((a.pi_w - a.pi).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(AnalyzeChain, AnyTargetPiWReachable) {
    const auto g = random_graph(11, {});
    const auto a0 = analyze_chain(g);
    const int n = g.n();
    Vector target = Vector::LinSpaced(n, 1.0, 2.0);
    target /= target.sum();
    // Ubar(i) proportional to target(i)/pi(i): spread it evenly over row i.
    Matrix W = Matrix::Zero(n, n);
    for (const auto& [i, j] : g.edges()) W(i, j) = target(i) / a0.pi(i);
    const auto a = analyze_chain(g.P(), W);
    EXPECT_LE((a.pi_w - target).cwiseAbs().maxCoeff(), 1e-12);
}
