#pragma once

#include "wmg/graph.hpp"

#include <limits>
#include <memory>

namespace wmg {

// Condition estimates above this are flagged, not rejected.
inline constexpr double kConditionWarning = 1e12;

/// Stationary distribution of an irreducible P by a direct solve of
/// (P^T - I) pi = 0 with one equation replaced by sum(pi) = 1. Works for
/// periodic chains.
inline Vector stationary_of(const Matrix& P) {
    const Eigen::Index n = P.rows();
    if (n == 0 || P.cols() != n) throw Error("stationary_of: square matrix required");
    Matrix support = (P.array() > 0.0).cast<double>().matrix();
    if (auto pair = find_unreachable_pair(support)) throw ReducibleChainError(pair->first, pair->second);

    Matrix A = P.transpose() - Matrix::Identity(n, n);
    A.row(n - 1).setOnes();
    Vector b = Vector::Zero(n);
    b(n - 1) = 1.0;
    Eigen::PartialPivLU<Matrix> lu(A);
    Vector pi = lu.solve(b);
    // One step of iterative refinement keeps ||pi P - pi|| at roundoff level
    // for badly scaled chains.
    pi += lu.solve(b - A * pi);
    for (Eigen::Index i = 0; i < n; ++i)
        if (pi(i) < 0.0 && pi(i) > -1e-14) pi(i) = 0.0;
    pi /= pi.sum();
    return pi;
}

/// Stationary quantities of the embedded chain and of the weighted process.
struct ChainAnalysis {
    Matrix P;       // transition matrix the analysis was computed from
    Vector pi;      // stationary distribution of P
    Matrix Pi;      // ergodic projector 1 pi
    Matrix Z;       // fundamental matrix (I - P + Pi)^-1
    Vector Ubar;    // expected weight per step from each state, (P o W) 1
    double Y = 0.0; // sum_k pi(k) Ubar(k)
    Vector pi_w;    // long-run fraction of weighted time per state
    double cond = 0.0;
    bool ill_conditioned = false;
    std::shared_ptr<const Eigen::PartialPivLU<Matrix>> lu; // factorization of I - P + Pi

    int n() const { return static_cast<int>(P.rows()); }
    double trace_Z() const { return Z.trace(); }
};

/// Fills pi, Pi, Z (via LU of I - P + Pi) and the weighted ingredients.
/// Throws ReducibleChainError or SingularSystemError.
inline ChainAnalysis analyze_chain(const Matrix& P, const Matrix& W) {
    const Eigen::Index n = P.rows();
    ChainAnalysis a;
    a.P = P;
    a.pi = stationary_of(P);
    a.Pi = Vector::Ones(n) * a.pi.transpose();
    const Matrix A = Matrix::Identity(n, n) - P + a.Pi;
    auto lu = std::make_shared<Eigen::PartialPivLU<Matrix>>(A);
    const double rcond = lu->rcond();
    a.cond = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
    if (!(rcond > 1e-15)) throw SingularSystemError("I - P + Pi is singular", a.cond);
    a.ill_conditioned = a.cond > kConditionWarning;
    a.Z = lu->inverse();
    a.lu = std::move(lu);
    a.Ubar = P.cwiseProduct(W).rowwise().sum();
    a.Y = a.pi.dot(a.Ubar);
    a.pi_w = a.pi.cwiseProduct(a.Ubar) / a.Y;
    return a;
}

inline ChainAnalysis analyze_chain(const WeightedMarkovGraph& g) {
    return analyze_chain(g.P(), g.W());
}

} // namespace wmg
