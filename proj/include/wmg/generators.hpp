#pragma once

#include "wmg/graph.hpp"

#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace wmg {

struct RandomGraphOptions {
    int n = 5;
    double extra_edge_prob = 0.4; // beyond the spanning cycle
    double w_lo = 0.5, w_hi = 3.0;
    double stochastic_fraction = 0.0; // share of edges that get a cv law
    double cv_lo = 0.2, cv_hi = 0.6;
    bool self_loops = false;
};

/// Random strongly connected graph: a random Hamiltonian cycle plus
/// independent extra edges, P from positive uniform draws normalized per row.
inline WeightedMarkovGraph random_graph(std::uint64_t seed, const RandomGraphOptions& o) {
    if (o.n < 1) throw Error("random_graph: n must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const int n = o.n;
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix mask = Matrix::Zero(n, n);
    for (int t = 0; t < n; ++t) mask(perm[t], perm[(t + 1) % n]) = 1.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if ((i != j || o.self_loops) && unif(rng) < o.extra_edge_prob) mask(i, j) = 1.0;

    std::vector<EdgeSpec> specs;
    for (int i = 0; i < n; ++i) {
        std::vector<EdgeSpec> row;
        double total = 0.0;
        for (int j = 0; j < n; ++j) {
            if (mask(i, j) == 0.0) continue;
            EdgeSpec s;
            s.from = i;
            s.to = j;
            s.p = 0.2 + unif(rng);
            total += s.p;
            s.w_mean = o.w_lo + (o.w_hi - o.w_lo) * unif(rng);
            if (unif(rng) < o.stochastic_fraction) {
                const double cv = o.cv_lo + (o.cv_hi - o.cv_lo) * unif(rng);
                s.tag = {unif(rng) < 0.5 ? WeightKind::lognormal : WeightKind::gamma, cv};
            }
            row.push_back(s);
        }
        for (auto& s : row) {
            s.p /= total;
            specs.push_back(s);
        }
    }
    // Exact row sums: put the rounding residue on the largest entry.
    Matrix P = Matrix::Zero(n, n);
    for (const auto& s : specs) P(s.from, s.to) = s.p;
    for (int i = 0; i < n; ++i) {
        Eigen::Index jmax;
        P.row(i).maxCoeff(&jmax);
        const double fix = 1.0 - P.row(i).sum();
        for (auto& s : specs)
            if (s.from == i && s.to == jmax) s.p += fix;
    }
    return make_graph(n, specs);
}

/// Directed n-cycle i -> i+1 with unit weights.
inline WeightedMarkovGraph cycle_graph(int n, double weight = 1.0) {
    std::vector<EdgeSpec> specs;
    for (int i = 0; i < n; ++i) specs.push_back({i, (i + 1) % n, 1.0, weight});
    return make_graph(n, specs);
}

/// Two-state swap chain with weights w01, w10.
inline WeightedMarkovGraph swap_graph(double w01 = 2.0, double w10 = 3.0) {
    std::vector<EdgeSpec> specs{{0, 1, 1.0, w01}, {1, 0, 1.0, w10}};
    return make_graph(2, specs);
}

} // namespace wmg
