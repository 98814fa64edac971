#pragma once

#include "wmg/kemeny.hpp"

#include <functional>
#include <optional>
#include <string>
#include <variant>

namespace wmg {

// ---------------------------------------------------------------------------
// Derivatives with respect to one mean edge weight W(l,k), P held fixed.

namespace detail {

inline void require_edge(const ChainAnalysis& a, int l, int k) {
    if (l < 0 || k < 0 || l >= a.n() || k >= a.n() || !(a.P(l, k) > 0.0))
        throw Error("(" + std::to_string(l) + "," + std::to_string(k) + ") is not an edge");
}

// Solution of (I - P) X = B - P dg(D) with [X]_dg fixed by D = (pi B) / pi:
// X = Z B - 1 1^T [Z B]_dg + (I - Z + 1 1^T [Z]_dg) dg(D).
inline Matrix passage_solve(const ChainAnalysis& a, const Matrix& core, const Matrix& B) {
    const Matrix ZB = a.Z * B;
    const Vector D = ((a.pi.transpose() * B).transpose().array() / a.pi.array()).matrix();
    return ZB - ones_dg(ZB) + core * D.asDiagonal();
}

} // namespace detail

/// d pi_W / d W(l,k) = pi(l) P(l,k) / Y^2 (Y e_l - n), n = pi o Ubar.
inline Vector d_pi_w_dW(const ChainAnalysis& a, int l, int k) {
    detail::require_edge(a, l, k);
    Vector d = -a.pi.cwiseProduct(a.Ubar);
    d(l) += a.Y;
    return (a.pi(l) * a.P(l, k) / (a.Y * a.Y)) * d;
}

/// dM / dW(l,k) = P(l,k) [Z e_l 1^T - 1 1^T [Z e_l 1^T]_dg + pi(l) L]. Contains no W.
inline Matrix d_M_dW(const ChainAnalysis& a, const Matrix& L, int l, int k) {
    detail::require_edge(a, l, k);
    const Eigen::Index n = a.n();
    Matrix out(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) out(i, j) = a.Z(i, l) - a.Z(j, l) + a.pi(l) * L(i, j);
    return a.P(l, k) * out;
}

inline Matrix d_M_dW(const ChainAnalysis& a, int l, int k) {
    return d_M_dW(a, mean_passage_lengths(a), l, k);
}

/// dM2 / dW(l,k). `w2_slope` is dW2(l,k)/dW(l,k): 2 W(l,k) for deterministic
/// weights, 2 W(l,k) (1 + cv^2) under a fixed-cv law.
inline Matrix d_M2_dW(const ChainAnalysis& a, const Matrix& W, const Matrix& M, const Matrix& dM,
                      int l, int k, double w2_slope) {
    detail::require_edge(a, l, k);
    const double p = a.P(l, k);
    const Matrix M_off = M - detail::dg_part(M);
    const Matrix dM_off = dM - detail::dg_part(dM);
    Matrix dB = 2.0 * a.P.cwiseProduct(W) * dM_off;
    dB.row(l).array() += w2_slope * p;
    dB.row(l) += 2.0 * p * M_off.row(k);
    return detail::passage_solve(a, detail::kemeny_snell_core(a.Z), dB);
}

/// Fixed-cv rule dW2/dW = 2 W2 / W for an edge of g.
inline double w2_slope(const WeightedMarkovGraph& g, int l, int k) {
    return 2.0 * g.W2()(l, k) / g.W()(l, k);
}

/// dV / dW(l,k) = dM2 - 2 M o dM.
inline Matrix d_V_dW(const Matrix& M, const Matrix& dM, const Matrix& dM2) {
    return dM2 - 2.0 * M.cwiseProduct(dM);
}

/// dK / dW(l,k) = tr(Z) pi(l) P(l,k) for every entry; zero off the support.
inline Matrix d_K_dW(const ChainAnalysis& a) {
    return a.trace_Z() * (a.pi.asDiagonal() * a.P);
}

/// dK_W / dW(l,k): two pi_W-shift terms plus pi_W dM pi_W^T.
inline double d_KW_dW(const ChainAnalysis& a, const Matrix& M, const Matrix& dM, int l, int k) {
    const Vector dpw = d_pi_w_dW(a, l, k);
    return dpw.dot(M * a.pi_w) + a.pi_w.dot(M * dpw) + a.pi_w.dot(dM * a.pi_w);
}

// ---------------------------------------------------------------------------
// Directional derivatives with respect to P along a feasible dP (dP 1 = 0,
// supported on the edges).

inline void check_feasible_direction(const ChainAnalysis& a, const Matrix& dP) {
    if (dP.rows() != a.n() || dP.cols() != a.n()) throw Error("dP has the wrong shape");
    const double scale = std::max(1.0, detail::max_abs(dP));
    if ((dP.rowwise().sum()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw Error("dP must have zero row sums");
    for (Eigen::Index i = 0; i < dP.rows(); ++i)
        for (Eigen::Index j = 0; j < dP.cols(); ++j)
            if (dP(i, j) != 0.0 && !(a.P(i, j) > 0.0)) throw Error("dP leaves the support of P");
}

/// d pi = pi dP Z.
inline Vector d_pi_dP(const ChainAnalysis& a, const Matrix& dP) {
    check_feasible_direction(a, dP);
    return (a.pi.transpose() * dP * a.Z).transpose();
}

/// dZ = Z (dP - 1 dpi) Z.
inline Matrix d_Z_dP(const ChainAnalysis& a, const Matrix& dP, const Vector& dpi) {
    const Eigen::Index n = a.n();
    return a.Z * (dP - Vector::Ones(n) * dpi.transpose()) * a.Z;
}

/// dM along dP, by the product rule on M = F Xi^-1 with
/// F = Z u pi - 1 1^T [Z u pi]_dg + C (I - Z + 1 1^T [Z]_dg), u = (P o W) 1, C = pi u.
inline Matrix d_M_dP(const ChainAnalysis& a, const Matrix& W, const Matrix& dP) {
    const Vector dpi = d_pi_dP(a, dP);
    const Matrix dZ = d_Z_dP(a, dP, dpi);
    const Vector u = a.P.cwiseProduct(W).rowwise().sum();
    const Vector du = dP.cwiseProduct(W).rowwise().sum();
    const double C = a.pi.dot(u);
    const double dC = dpi.dot(u) + a.pi.dot(du);

    const Matrix T = a.Z * u * a.pi.transpose();
    const Matrix dT = dZ * u * a.pi.transpose() + a.Z * du * a.pi.transpose() + a.Z * u * dpi.transpose();
    const Matrix core = detail::kemeny_snell_core(a.Z);
    const Matrix F = T - detail::ones_dg(T) + C * core;
    const Matrix dF = dT - detail::ones_dg(dT) + dC * core + C * (-dZ + detail::ones_dg(dZ));
    const Vector ipi = a.pi.cwiseInverse();
    const Vector dipi = -(dpi.array() * ipi.array() * ipi.array()).matrix();
    return dF * ipi.asDiagonal() + F * dipi.asDiagonal();
}

// ---------------------------------------------------------------------------
// Assembled gradients over all edges (entries off the support are zero).

struct WeightGradients {
    Matrix K;        // dK/dW
    Matrix K_W;      // dK_W/dW
    Matrix V_scalar; // d(pi V pi^T)/dW
    Matrix V_W;      // d(pi_W V pi_W^T)/dW
};

/// Per-edge loop over d_M_dW, d_M2_dW, d_V_dW and d_pi_w_dW, chained into the
/// scalar objectives. `slopes` holds dW2/dW per edge.
inline WeightGradients weight_gradients(const ChainAnalysis& a, const Matrix& W, const Matrix& slopes,
                                        const PassageMoments& m, bool want_second_order = true) {
    const int n = a.n();
    WeightGradients g;
    g.K = d_K_dW(a);
    g.K_W = Matrix::Zero(n, n);
    g.V_scalar = Matrix::Zero(n, n);
    g.V_W = Matrix::Zero(n, n);
    const Vector Vpw = m.V * a.pi_w;
    const RowVector pwV = a.pi_w.transpose() * m.V;
    const Vector Mpw = m.M * a.pi_w;
    const RowVector pwM = a.pi_w.transpose() * m.M;
    for (int l = 0; l < n; ++l) {
        for (int k = 0; k < n; ++k) {
            if (!(a.P(l, k) > 0.0)) continue;
            const Matrix dM = d_M_dW(a, m.L, l, k);
            const Vector dpw = d_pi_w_dW(a, l, k);
            g.K_W(l, k) = dpw.dot(Mpw) + pwM.dot(dpw) + a.pi_w.dot(dM * a.pi_w);
            if (!want_second_order) continue;
            const Matrix dM2 = d_M2_dW(a, W, m.M, dM, l, k, slopes(l, k));
            const Matrix dV = d_V_dW(m.M, dM, dM2);
            g.V_scalar(l, k) = a.pi.dot(dV * a.pi);
            g.V_W(l, k) = dpw.dot(Vpw) + pwV.dot(dpw) + a.pi_w.dot(dV * a.pi_w);
        }
    }
    return g;
}

inline Matrix w2_slopes(const WeightedMarkovGraph& g) {
    Matrix s = Matrix::Zero(g.n(), g.n());
    for (const auto& [i, j] : g.edges()) s(i, j) = w2_slope(g, i, j);
    return s;
}

inline WeightGradients weight_gradients(const WeightedMarkovGraph& g, bool want_second_order = true) {
    const auto a = analyze_chain(g);
    return weight_gradients(a, g.W(), w2_slopes(g), passage_moments(a, g), want_second_order);
}

// ---------------------------------------------------------------------------
// Finite-difference verification.

enum class Quantity { pi_w, M, M2, V, K, K_W, V_scalar, V_W, pi, Z, M_wrt_P };

inline const char* to_string(Quantity q) {
    switch (q) {
    case Quantity::pi_w: return "pi_w";
    case Quantity::M: return "M";
    case Quantity::M2: return "M2";
    case Quantity::V: return "V";
    case Quantity::K: return "K";
    case Quantity::K_W: return "K_W";
    case Quantity::V_scalar: return "V_scalar";
    case Quantity::V_W: return "V_W";
    case Quantity::pi: return "pi";
    case Quantity::Z: return "Z";
    case Quantity::M_wrt_P: return "M_wrt_P";
    }
    return "?";
}

inline bool is_P_quantity(Quantity q) {
    return q == Quantity::pi || q == Quantity::Z || q == Quantity::M_wrt_P;
}

inline const std::vector<Quantity>& all_quantities() {
    static const std::vector<Quantity> q{Quantity::pi_w, Quantity::M,   Quantity::M2, Quantity::V,
                                         Quantity::K,    Quantity::K_W, Quantity::V_scalar,
                                         Quantity::V_W,  Quantity::pi,  Quantity::Z,  Quantity::M_wrt_P};
    return q;
}

enum class Parameter { W, P };

struct GradientReport {
    Quantity quantity = Quantity::M;
    Parameter wrt = Parameter::W;
    Matrix direction;  // dW or dP
    Matrix analytic;   // scalars and vectors stored as 1x1 / n x 1
    Matrix fd;
    double h = 0.0;    // effective step actually used
    double rel_err = 0.0;
};

namespace detail {

inline Matrix as_matrix(double v) { return Matrix::Constant(1, 1, v); }
inline Matrix as_matrix(const Vector& v) { return Matrix(v); }

// Quantity as a function of (P, W, W2) with fresh analysis.
inline Matrix evaluate_quantity(Quantity q, const Matrix& P, const Matrix& W, const Matrix& W2) {
    const auto a = analyze_chain(P, W);
    switch (q) {
    case Quantity::pi: return as_matrix(a.pi);
    case Quantity::pi_w: return as_matrix(a.pi_w);
    case Quantity::Z: return a.Z;
    case Quantity::K: return as_matrix(kemeny_trace_form(a, W));
    case Quantity::M:
    case Quantity::M_wrt_P: return weighted_mean_passage(a, W);
    default: break;
    }
    const Matrix M = weighted_mean_passage(a, W);
    const Matrix M2 = weighted_second_moment(a, W, W2, M);
    const Matrix V = M2 - M.cwiseProduct(M); // unclamped so FD stays smooth
    switch (q) {
    case Quantity::M2: return M2;
    case Quantity::V: return V;
    case Quantity::K_W: return as_matrix(a.pi_w.dot(M * a.pi_w));
    case Quantity::V_scalar: return as_matrix(a.pi.dot(V * a.pi));
    case Quantity::V_W: return as_matrix(a.pi_w.dot(V * a.pi_w));
    default: break;
    }
    throw Error("unhandled quantity");
}

// Second moments after moving the means along a fixed-cv law.
inline Matrix scaled_w2(const WeightedMarkovGraph& g, const Matrix& Wnew) {
    Matrix W2 = Matrix::Zero(g.n(), g.n());
    for (const auto& [i, j] : g.edges()) {
        const double w = g.W()(i, j);
        W2(i, j) = g.W2()(i, j) * (Wnew(i, j) / w) * (Wnew(i, j) / w);
    }
    return W2;
}

} // namespace detail

/// Analytic directional derivative of `q` along `direction` in the given
/// parameter space.
inline Matrix analytic_directional(Quantity q, const WeightedMarkovGraph& g, const Matrix& direction) {
    const auto a = analyze_chain(g);
    const int n = g.n();
    if (is_P_quantity(q)) {
        const Vector dpi = d_pi_dP(a, direction);
        switch (q) {
        case Quantity::pi: return detail::as_matrix(dpi);
        case Quantity::Z: return d_Z_dP(a, direction, dpi);
        default: return d_M_dP(a, g.W(), direction);
        }
    }
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (direction(i, j) != 0.0 && !g.has_edge(static_cast<int>(i), static_cast<int>(j)))
                throw Error("weight direction leaves the edge set");
    const auto m = passage_moments(a, g);
    Matrix acc;
    auto add = [&](const Matrix& v, double c) {
        if (acc.size() == 0) acc = Matrix::Zero(v.rows(), v.cols());
        acc += c * v;
    };
    if (q == Quantity::K) return detail::as_matrix(d_K_dW(a).cwiseProduct(direction).sum());
    for (const auto& [l, k] : g.edges()) {
        const double c = direction(l, k);
        if (c == 0.0) continue;
        const Matrix dM = d_M_dW(a, m.L, l, k);
        switch (q) {
        case Quantity::pi_w: add(d_pi_w_dW(a, l, k), c); break;
        case Quantity::M: add(dM, c); break;
        case Quantity::K_W: add(detail::as_matrix(d_KW_dW(a, m.M, dM, l, k)), c); break;
        default: {
            const Matrix dM2 = d_M2_dW(a, g.W(), m.M, dM, l, k, w2_slope(g, l, k));
            if (q == Quantity::M2) {
                add(dM2, c);
                break;
            }
            const Matrix dV = d_V_dW(m.M, dM, dM2);
            if (q == Quantity::V) add(dV, c);
            else if (q == Quantity::V_scalar) add(detail::as_matrix(a.pi.dot(dV * a.pi)), c);
            else {
                const Vector dpw = d_pi_w_dW(a, l, k);
                add(detail::as_matrix(dpw.dot(m.V * a.pi_w) + a.pi_w.dot(m.V * dpw) +
                                      a.pi_w.dot(dV * a.pi_w)),
                    c);
            }
        }
        }
    }
    if (acc.size() == 0) {
        const Matrix shape = detail::evaluate_quantity(q, g.P(), g.W(), g.W2());
        return Matrix::Zero(shape.rows(), shape.cols());
    }
    return acc;
}

/// Central difference (f(x + h d) - f(x - h d)) / (2h) against the analytic
/// directional derivative. The step is scaled per coordinate magnitude:
/// h_eff = h (1 + max |x| over the direction's support). `corrupt` scales the
/// analytic value (negative controls only).
inline GradientReport fd_verify(Quantity q, const WeightedMarkovGraph& g, const Matrix& direction,
                                double h = 1e-6, double corrupt = 0.0) {
    if (!(h > 0.0)) throw Error("fd_verify: h must be positive");
    GradientReport r;
    r.quantity = q;
    r.wrt = is_P_quantity(q) ? Parameter::P : Parameter::W;
    r.direction = direction;
    const Matrix& x = r.wrt == Parameter::P ? g.P() : g.W();
    double xmax = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j)
            if (direction(i, j) != 0.0) xmax = std::max(xmax, std::abs(x(i, j)));
    r.h = h * (1.0 + xmax);

    // The analytic side is evaluated along the perturbation actually
    // representable in floating point, (x+ - x-) / 2h, so rounding of x +- h d
    // does not masquerade as derivative error.
    Matrix plus, minus, realized;
    if (r.wrt == Parameter::P) {
        const Matrix Pp = g.P() + r.h * direction, Pm = g.P() - r.h * direction;
        realized = (Pp - Pm) / (2.0 * r.h);
        plus = detail::evaluate_quantity(q, Pp, g.W(), g.W2());
        minus = detail::evaluate_quantity(q, Pm, g.W(), g.W2());
    } else {
        const Matrix Wp = g.W() + r.h * direction, Wm = g.W() - r.h * direction;
        realized = (Wp - Wm) / (2.0 * r.h);
        plus = detail::evaluate_quantity(q, g.P(), Wp, detail::scaled_w2(g, Wp));
        minus = detail::evaluate_quantity(q, g.P(), Wm, detail::scaled_w2(g, Wm));
    }
    r.analytic = analytic_directional(q, g, realized) * (1.0 + corrupt);
    r.fd = (plus - minus) / (2.0 * r.h);
    if (q == Quantity::K) {
        const Matrix Wp = g.W() + r.h * direction, Wm = g.W() - r.h * direction;
        const auto a = analyze_chain(g.P(), g.W());
        const long double diff =
            detail::kemeny_trace_form_ext(a, Wp) - detail::kemeny_trace_form_ext(a, Wm);
        r.fd(0, 0) = static_cast<double>(diff / (2.0L * r.h));
    }
    r.rel_err = detail::max_abs(r.analytic - r.fd) / (1.0 + detail::max_abs(r.fd));
    return r;
}

/// Unit weight direction e_l e_k^T.
inline Matrix edge_direction(int n, int l, int k) {
    Matrix d = Matrix::Zero(n, n);
    d(l, k) = 1.0;
    return d;
}

/// Feasible probability direction e_l (e_k - e_m)^T moving mass between two
/// out-edges of l.
inline Matrix swap_direction(int n, int l, int k, int m) {
    Matrix d = Matrix::Zero(n, n);
    d(l, k) = 1.0;
    d(l, m) = -1.0;
    return d;
}

} // namespace wmg
