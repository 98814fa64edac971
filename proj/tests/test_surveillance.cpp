#include "wmg/surveillance.hpp"

#include <gtest/gtest.h>

using namespace wmg;

TEST(Grid, FourByFourCounts) {
    const auto g = build_grid(canonical_grid_4x4());
    EXPECT_EQ(g.graph.n(), 16);
    EXPECT_EQ(g.graph.num_edges(), 48u);
    EXPECT_TRUE(g.graph.all_deterministic());
    EXPECT_LE((g.mu - Vector::Constant(16, 1.0 / 16)).cwiseAbs().maxCoeff(), 1e-15);
    for (const auto& [i, j] : g.graph.edges()) {
        EXPECT_GE(g.graph.W()(i, j), 1.0);
        EXPECT_LE(g.graph.W()(i, j), 3.0);
    }
}

TEST(Grid, EightByEightWithObstacles) {
    const auto g = build_grid(canonical_grid_8x8());
    EXPECT_EQ(g.graph.n(), 60);
    EXPECT_EQ(g.graph.num_edges(), 196u);
    EXPECT_FALSE(g.graph.all_deterministic());
    EXPECT_EQ(g.priority_nodes.size(), 12u);
    EXPECT_NEAR(g.mu.sum(), 1.0, 1e-14);
    const double base = g.mu.minCoeff();
    for (int v : g.priority_nodes) EXPECT_NEAR(g.mu(v), 2.0 * base, 1e-15);
    EXPECT_TRUE(strongly_connected(g.graph.support_mask()));
}

TEST(Grid, StochasticMixMatchesSpec) {
    const auto g = build_grid(canonical_grid_8x8());
    int high = 0;
    double sum = 0.0;
    for (const auto& [i, j] : g.graph.edges()) {
        const auto& t = g.graph.tag(i, j);
        EXPECT_GE(t.cv, 0.3);
        EXPECT_LE(t.cv, 1.7);
        if (t.cv > 1.0) ++high;
        sum += t.cv;
    }
    const double m = static_cast<double>(g.graph.num_edges());
    EXPECT_NEAR(high / m, 0.4, 0.1);
    EXPECT_NEAR(sum / m, 0.85, 0.1);
}

TEST(Grid, DisconnectingObstaclesRejected) {
    GridSpec s;
    s.rows = 3;
    s.cols = 3;
    s.obstacles = {{0, 1}, {1, 1}, {2, 1}};
    EXPECT_THROW(build_grid(s), Error);
}

TEST(Grid, SpecJsonRoundTrip) {
    const auto s = canonical_grid_8x8(7);
    nlohmann::json j = s;
    const auto back = j.get<GridSpec>();
    EXPECT_EQ(back.rows, 8);
    EXPECT_EQ(back.obstacles, s.obstacles);
    EXPECT_EQ(back.seed, 7u);
    EXPECT_TRUE(back.stochastic);
    EXPECT_EQ(back.target, TargetRule::obstacle_adjacent);
    EXPECT_THROW((nlohmann::json{{"rows", "x"}}.get<GridSpec>()), ParseError);
    EXPECT_THROW((nlohmann::json{{"colour", 1}}.get<GridSpec>()), ParseError);
}

TEST(PolicyStructure, DetectsHamiltonianCycle) {
    Matrix P = Matrix::Zero(4, 4);
    for (int i = 0; i < 4; ++i) {
        P(i, (i + 1) % 4) = 0.9;
        P(i, (i + 3) % 4) = 0.1;
    }
    const auto s = analyze_policy(P);
    EXPECT_EQ(s.dominant_edges.size(), 4u);
    EXPECT_TRUE(s.is_hamiltonian_cycle);
}

TEST(PolicyStructure, TwoCyclesAreNotHamiltonian) {
    Matrix P = Matrix::Zero(4, 4);
    P(0, 1) = P(1, 0) = P(2, 3) = P(3, 2) = 0.8;
    P(0, 3) = P(1, 2) = P(2, 1) = P(3, 0) = 0.2;
    const auto s = analyze_policy(P);
    EXPECT_EQ(s.dominant_edges.size(), 4u);
    EXPECT_FALSE(s.is_hamiltonian_cycle);
}

TEST(PolicyStructure, MissingDominantEdge) {
    const Matrix P = Matrix::Constant(3, 3, 1.0 / 3);
    const auto s = analyze_policy(P);
    EXPECT_TRUE(s.dominant_edges.empty());
    EXPECT_FALSE(s.is_hamiltonian_cycle);
}

TEST(StudyMode, ParseRoundTrip) {
    for (auto m : {StudyMode::max_surprise, StudyMode::min_variance, StudyMode::baseline})
        EXPECT_EQ(parse_study_mode(to_string(m)), m);
    EXPECT_THROW(parse_study_mode("fastest"), ParseError);
}

TEST(Study, ShortMaxSurpriseRunImprovesOnBaseline) {
    OptimizerConfig cfg;
    cfg.iterations = 200;
    cfg.a = 1.0;
    cfg.c = 0.1;
    const auto r = run_surveillance_study(canonical_grid_4x4(), cfg, StudyMode::max_surprise);
    ASSERT_EQ(r.rows.size(), 2u);
    EXPECT_EQ(r.rows[0].policy, "baseline");
    EXPECT_GE(r.rows[1].S, r.rows[0].S);
    EXPECT_NEAR(r.rows[1].gain, r.rows[1].S / r.rows[0].S - 1.0, 1e-15);
    EXPECT_TRUE(std::isnan(r.cv_correlation));
    EXPECT_LE((r.grid.mu.transpose() * r.P - r.grid.mu.transpose()).cwiseAbs().maxCoeff(), 1e-8);
    for (const auto& [i, j] : r.grid.graph.edges()) EXPECT_GE(r.P(i, j), 1e-4 - 1e-12);
}

TEST(Study, BaselineModeHasOneRow) {
    const auto r = run_surveillance_study(canonical_grid_4x4(), {}, StudyMode::baseline);
    ASSERT_EQ(r.rows.size(), 1u);
    EXPECT_EQ(r.P, r.baseline_P);
    EXPECT_NEAR(r.rows[0].S, analyze_policy(r.P, r.grid.graph).S, 1e-15);
}

TEST(Study, CorrelationDefinedOnStochasticGrid) {
    const auto g = build_grid(canonical_grid_8x8());
    const double rho = policy_cv_correlation(g.graph.P(), g.graph);
    EXPECT_TRUE(std::isfinite(rho));
    EXPECT_LE(std::abs(rho), 1.0);
}
