#include "wmg/generators.hpp"
#include "wmg/io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

using namespace wmg;

namespace {

std::filesystem::path fixture(const char* name) { return std::filesystem::path(WMG_FIXTURE_DIR) / name; }

std::filesystem::path scratch(const char* name) {
    auto dir = std::filesystem::temp_directory_path() / "wmg_test_graph";
    std::filesystem::create_directories(dir);
    return dir / name;
}

} // namespace

TEST(Validate, SwapChainIsAdmissible) {
    EXPECT_TRUE(validate(swap_graph()).ok());
}

TEST(Validate, RowSumViolation) {
    std::vector<EdgeSpec> specs{{0, 1, 0.9, 2.0}, {1, 0, 1.0, 3.0}};
    const auto r = validate(make_graph(2, specs));
    ASSERT_EQ(r.violations.size(), 1u);
    EXPECT_EQ(r.violations[0], "row 0 sums to 0.9");
}

TEST(Validate, IsolatedNodeBreaksConnectivity) {
    // Node 2 has a self-loop but no in-edges from the others.
    std::vector<EdgeSpec> specs{{0, 1, 1.0, 1.0}, {1, 0, 1.0, 1.0}, {2, 2, 1.0, 1.0}};
    const auto r = validate(make_graph(3, specs));
    ASSERT_FALSE(r.ok());
    EXPECT_NE(std::find(r.violations.begin(), r.violations.end(),
                        "1 strongly connected component required, found 2"),
              r.violations.end());
}

TEST(Validate, MomentConsistencyAndTags) {
    std::vector<EdgeSpec> specs{{0, 1, 1.0, 2.0, {}, 3.0}, {1, 0, 1.0, 3.0}};
    const auto r = validate(make_graph(2, specs));
    ASSERT_EQ(r.violations.size(), 1u);
    EXPECT_NE(r.violations[0].find("below squared mean"), std::string::npos);
}

TEST(Validate, WeightFloor) {
    std::vector<EdgeSpec> specs{{0, 1, 1.0, 1e-12}, {1, 0, 1.0, 3.0}};
    EXPECT_FALSE(validate(make_graph(2, specs)).ok());
}

TEST(Validate, SelfLoopsAllowed) {
    std::vector<EdgeSpec> specs{{0, 0, 0.5, 1.0}, {0, 1, 0.5, 1.0}, {1, 0, 1.0, 1.0}};
    EXPECT_TRUE(validate(make_graph(2, specs)).ok());
}

TEST(Graph, DuplicateEdgeRejected) {
    std::vector<EdgeSpec> specs{{0, 1, 0.5, 1.0}, {0, 1, 0.5, 1.0}, {1, 0, 1.0, 1.0}};
    EXPECT_THROW(make_graph(2, specs), Error);
}

TEST(Graph, TagInvariants) {
    EXPECT_THROW(WeightDistributionTag::with_cv(WeightKind::lognormal, 0.0), Error);
    EXPECT_TRUE((WeightDistributionTag{WeightKind::deterministic, 0.1}).check().has_value());
    EXPECT_FALSE(WeightDistributionTag::with_cv(WeightKind::gamma, 0.5).check().has_value());
}

TEST(Graph, UniformMixing) {
    const Matrix H2 = uniform_mixing_matrix(2);
    EXPECT_TRUE((H2.array() == 0.5).all());
    const Matrix H4 = uniform_mixing_matrix(4);
    EXPECT_TRUE((H4.array() == 0.25).all());
    EXPECT_GE(uniform_mixing_matrix(16)(3, 7), 1e-4);
    EXPECT_THROW(uniform_mixing_matrix(0), Error);
}

TEST(Graph, WithWeightsKeepsCvLaw) {
    std::vector<EdgeSpec> specs{{0, 1, 1.0, 2.0, {WeightKind::lognormal, 0.5}}, {1, 0, 1.0, 3.0}};
    const auto g = make_graph(2, specs);
    Matrix W = g.W();
    W(0, 1) = 4.0;
    const auto h = g.with_weights(W);
    EXPECT_DOUBLE_EQ(h.W2()(0, 1), 16.0 * 1.25);
    EXPECT_DOUBLE_EQ(h.W2()(1, 0), 9.0);
}

TEST(Graph, WithTransitionDropsEdges) {
    const auto g = random_graph(3, {.n = 4, .extra_edge_prob = 1.0});
    Matrix P = g.P();
    const auto [i, j] = g.edges().front();
    const double removed = P(i, j);
    P(i, j) = 0.0;
    P.row(i) /= (1.0 - removed);
    const auto h = g.with_transition(P);
    EXPECT_EQ(h.num_edges(), g.num_edges() - 1);
    EXPECT_EQ(h.W()(i, j), 0.0);
    EXPECT_TRUE(validate(h).ok());
}

TEST(Load, TwoStateJson) {
    const auto g = load_graph(fixture("two_state.json"));
    ASSERT_EQ(g.n(), 2);
    EXPECT_EQ(g.num_edges(), 2u);
    EXPECT_EQ(g.P()(0, 1), 1.0);
    EXPECT_EQ(g.W()(1, 0), 3.0);
    EXPECT_EQ(g.W2()(0, 1), 4.0);
    EXPECT_TRUE(g.all_deterministic());
}

TEST(Load, CvFillsSecondMoment) {
    json doc = json::parse(R"({"n":2,"edges":[{"from":0,"to":1,"p":1,"w_mean":2.0,"cv":0.5},
                                              {"from":1,"to":0,"p":1,"w_mean":3.0}]})");
    const auto g = parse_graph_json(doc).graph;
    EXPECT_DOUBLE_EQ(g.W2()(0, 1), 5.0);
    EXPECT_EQ(g.tag(0, 1).kind, WeightKind::lognormal);
}

TEST(Load, MissingFieldNamesEdge) {
    try {
        load_graph(fixture("missing_p.json"));
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.locus(), "edges[1] (1->0)");
        EXPECT_NE(std::string(e.what()).find("missing field \"p\""), std::string::npos);
    }
}

TEST(Load, ValidationFailureAborts) {
    try {
        load_graph(fixture("bad_rowsum.json"));
        FAIL();
    } catch (const ValidationError& e) {
        ASSERT_EQ(e.violations().size(), 1u);
        EXPECT_EQ(e.violations()[0], "row 0 sums to 0.9");
    }
}

TEST(Load, Csv) {
    const auto g = load_graph(fixture("two_state.csv"));
    EXPECT_DOUBLE_EQ(g.W2()(0, 1), 5.0);
    EXPECT_DOUBLE_EQ(g.W2()(1, 0), 9.0);
}

TEST(Load, BadCsvNumber) {
    std::istringstream in("from,to,p,w_mean,cv\n0,1,abc,2,0\n");
    try {
        parse_graph_csv(in);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.locus(), "line 2");
    }
}

TEST(Load, MuAndDestinations) {
    const auto f = load_graph_file(fixture("random5.json"));
    EXPECT_EQ(f.destinations, (std::vector<int>{2, 4}));
    EXPECT_FALSE(f.mu.has_value());
}

TEST(Save, RoundTripIsBitExact) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto g = random_graph(seed, {.n = 6, .stochastic_fraction = 0.5});
        const auto path = scratch("roundtrip.json");
        save_graph(path, g);
        const auto h = load_graph(path);
        EXPECT_TRUE(g.P() == h.P()) << seed;
        EXPECT_TRUE(g.W() == h.W()) << seed;
        EXPECT_TRUE(g.W2() == h.W2()) << seed;
        EXPECT_EQ(g.tags(), h.tags()) << seed;
    }
}

TEST(Connectivity, TarjanCounts) {
    std::vector<std::vector<int>> adj{{1}, {0}, {3}, {2}, {}};
    EXPECT_EQ(count_strong_components(adj), 3);
    EXPECT_TRUE(strongly_connected(cycle_graph(7).support_mask()));
}
