#pragma once

#include "wmg/passage.hpp"

#include <cmath>

namespace wmg {

/// Scalar summaries of a weighted Markovian graph.
struct KemenySummary {
    double K = 0.0;        // pi M pi^T
    double K_W = 0.0;      // pi_W M pi_W^T
    double V_scalar = 0.0; // pi V pi^T
    double V_W = 0.0;      // pi_W V pi_W^T
    double S = 0.0;        // sqrt(V_W) / K_W
    double R = 0.0;        // effective graph resistance
};

namespace detail {

// tr(Z) pi (P o W) 1 accumulated in extended precision, so finite differences
// of this linear map stay at roundoff level.
inline long double kemeny_trace_form_ext(const ChainAnalysis& a, const Matrix& W) {
    long double total = 0.0L;
    for (Eigen::Index i = 0; i < a.P.rows(); ++i) {
        long double row = 0.0L;
        for (Eigen::Index j = 0; j < a.P.cols(); ++j)
            row += static_cast<long double>(a.P(i, j)) * static_cast<long double>(W(i, j));
        total += static_cast<long double>(a.pi(i)) * row;
    }
    long double trace = 0.0L;
    for (Eigen::Index i = 0; i < a.Z.rows(); ++i) trace += a.Z(i, i);
    return trace * total;
}

} // namespace detail

/// K from its trace identity, tr(Z) pi (P o W) 1. Linear in W.
inline double kemeny_trace_form(const ChainAnalysis& a, const Matrix& W) {
    return static_cast<double>(detail::kemeny_trace_form_ext(a, W));
}

inline double surprise_index(double K_W, double V_W) {
    if (!(K_W > 0.0)) throw Error("surprise_index: K_W must be positive");
    return std::sqrt(std::max(V_W, 0.0)) / K_W;
}

inline double surprise_index(const KemenySummary& s) { return surprise_index(s.K_W, s.V_W); }

/// R = (1 / (2|E|)) sum_{i<j} (L(i,j) + L(j,i)).
inline double graph_resistance(const Matrix& L, std::size_t num_edges) {
    if (num_edges == 0) throw Error("graph_resistance: graph has no edges");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < L.rows(); ++i)
        for (Eigen::Index j = i + 1; j < L.cols(); ++j) sum += L(i, j) + L(j, i);
    return sum / (2.0 * static_cast<double>(num_edges));
}

/// Quadratic forms over M and V (diagonal included). K is cross-checked
/// against the trace identity; a mismatch beyond 1e-9 relative is an error.
inline KemenySummary kemeny_constants(const ChainAnalysis& a, const Matrix& W, const PassageMoments& m,
                                      std::size_t num_edges) {
    KemenySummary s;
    s.K = a.pi.dot(m.M * a.pi);
    s.K_W = a.pi_w.dot(m.M * a.pi_w);
    s.V_scalar = a.pi.dot(m.V * a.pi);
    s.V_W = a.pi_w.dot(m.V * a.pi_w);
    s.S = surprise_index(s.K_W, s.V_W);
    s.R = num_edges > 0 ? graph_resistance(m.L, num_edges) : 0.0;
    const double Kt = kemeny_trace_form(a, W);
    if (std::abs(s.K - Kt) > 1e-9 * std::max(1.0, std::abs(Kt)))
        throw Error("Kemeny constant disagrees with its trace identity: " + std::to_string(s.K) + " vs " +
                    std::to_string(Kt));
    return s;
}

inline KemenySummary kemeny_constants(const WeightedMarkovGraph& g) {
    const auto a = analyze_chain(g);
    return kemeny_constants(a, g.W(), passage_moments(a, g), g.num_edges());
}

} // namespace wmg
