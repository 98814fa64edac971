#pragma once

#include "wmg/gradients.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace wmg {

struct OptimizerConfig {
    std::uint64_t seed = 1;
    int iterations = 1000;
    // SPSA gains: a_k = a / (k + 1 + A)^alpha, c_k = c / (k + 1)^gamma.
    double a = 0.1;
    double c = 0.05;
    double A = -1.0; // negative: iterations / 10
    double alpha = 0.602;
    double gamma = 0.101;
    int restarts = 0; // extra SPSA runs from seeds seed+1 .. seed+restarts
    double projection_tol = 1e-10;
    int max_projection_sweeps = 10000;
    double phase1_tol = 1e-8;
    // Variance-constraint penalty: rho0 * growth^r for r < rounds.
    double penalty_rho0 = 10.0;
    double penalty_growth = 10.0;
    int penalty_rounds = 5;
    int penalty_inner_iterations = 200;
    double variance_slack = 1e-6; // relative tolerance on V <= V_ref

    double stability_constant() const { return A >= 0.0 ? A : iterations / 10.0; }
};

inline void to_json(nlohmann::json& j, const OptimizerConfig& c) {
    j = nlohmann::json{{"seed", c.seed},
                       {"iterations", c.iterations},
                       {"a", c.a},
                       {"c", c.c},
                       {"A", c.A},
                       {"alpha", c.alpha},
                       {"gamma", c.gamma},
                       {"restarts", c.restarts},
                       {"projection_tol", c.projection_tol},
                       {"max_projection_sweeps", c.max_projection_sweeps},
                       {"phase1_tol", c.phase1_tol},
                       {"penalty_rho0", c.penalty_rho0},
                       {"penalty_growth", c.penalty_growth},
                       {"penalty_rounds", c.penalty_rounds},
                       {"penalty_inner_iterations", c.penalty_inner_iterations},
                       {"variance_slack", c.variance_slack}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, OptimizerConfig& c) {
    if (!j.is_object()) throw ParseError("optimizer", "config must be an object");
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "iterations") c.iterations = value.get<int>();
            else if (key == "a") c.a = value.get<double>();
            else if (key == "c") c.c = value.get<double>();
            else if (key == "A") c.A = value.get<double>();
            else if (key == "alpha") c.alpha = value.get<double>();
            else if (key == "gamma") c.gamma = value.get<double>();
            else if (key == "restarts") c.restarts = value.get<int>();
            else if (key == "projection_tol") c.projection_tol = value.get<double>();
            else if (key == "max_projection_sweeps") c.max_projection_sweeps = value.get<int>();
            else if (key == "phase1_tol") c.phase1_tol = value.get<double>();
            else if (key == "penalty_rho0") c.penalty_rho0 = value.get<double>();
            else if (key == "penalty_growth") c.penalty_growth = value.get<double>();
            else if (key == "penalty_rounds") c.penalty_rounds = value.get<int>();
            else if (key == "penalty_inner_iterations") c.penalty_inner_iterations = value.get<int>();
            else if (key == "variance_slack") c.variance_slack = value.get<double>();
            else throw ParseError("optimizer." + key, "unknown key");
        } catch (const nlohmann::json::exception&) {
            throw ParseError("optimizer." + key, "wrong type");
        }
    }
    if (c.iterations < 0 || !(c.a > 0) || !(c.c > 0) || !(c.alpha > 0) || !(c.gamma > 0) ||
        !(c.projection_tol > 0) || c.max_projection_sweeps < 1 || !(c.phase1_tol > 0) ||
        !(c.penalty_rho0 > 0) || !(c.penalty_growth > 1) || c.penalty_rounds < 1 ||
        c.penalty_inner_iterations < 1 || c.restarts < 0 || !(c.variance_slack >= 0))
        throw ParseError("optimizer", "parameters out of range");
}

// ---------------------------------------------------------------------------
// Feasible set {P : mu^T P = mu^T, P 1 = 1, P >= eta on the support, 0 elsewhere}.

enum class SetStatus { feasible, infeasible };

inline const char* to_string(SetStatus s) { return s == SetStatus::feasible ? "feasible" : "infeasible"; }

struct PolicyFeasibleSet {
    int n = 0;
    Vector mu;
    double eta = 0.0;
    Matrix support;
    std::vector<Edge> free;  // free entries, row-major order
    Matrix A;                // stacked constraints on the free entries
    Vector b;
    Matrix row_basis;        // orthonormal basis of the row space of A
    Matrix nullspace_basis;  // orthonormal basis of ker A
    Vector particular;       // minimum-norm solution of A x = b
    SetStatus status = SetStatus::infeasible;
    Matrix witness;          // feasible point when status == feasible
    std::string witness_kind;
    double residual = std::numeric_limits<double>::infinity();

    std::size_t dim() const { return free.size(); }

    Vector to_vector(const Matrix& P) const {
        Vector x(free.size());
        for (std::size_t e = 0; e < free.size(); ++e) x(e) = P(free[e].from, free[e].to);
        return x;
    }

    Matrix to_matrix(const Vector& x) const {
        Matrix P = Matrix::Zero(n, n);
        for (std::size_t e = 0; e < free.size(); ++e) P(free[e].from, free[e].to) = x(e);
        return P;
    }

    // max(|A x - b|, box violation)
    double residual_of(const Vector& x) const {
        double r = (A * x - b).cwiseAbs().maxCoeff();
        for (Eigen::Index e = 0; e < x.size(); ++e) r = std::max({r, eta - x(e), x(e) - 1.0});
        return std::max(r, 0.0);
    }
};

struct ProjectionResult {
    Matrix P;
    double residual = 0.0;
    int sweeps = 0;
    bool converged = false;
};

namespace detail {

inline Vector affine_step(const PolicyFeasibleSet& s, const Vector& x) {
    return x - s.row_basis * (s.row_basis.transpose() * (x - s.particular));
}

inline Vector clip(const Vector& x, double lo, double hi) { return x.cwiseMax(lo).cwiseMin(hi); }

// Minimum-norm correction of the affine residual on the entries strictly
// inside the box, kept only if it stays inside and helps. Brings the
// constraint residual from the sweep tolerance down to roundoff.
inline Vector polish(const PolicyFeasibleSet& s, const Vector& x) {
    std::vector<Eigen::Index> inner;
    for (Eigen::Index e = 0; e < x.size(); ++e)
        if (x(e) > s.eta && x(e) < 1.0) inner.push_back(e);
    if (inner.empty()) return x;
    Matrix Af(s.A.rows(), static_cast<Eigen::Index>(inner.size()));
    for (std::size_t k = 0; k < inner.size(); ++k) Af.col(static_cast<Eigen::Index>(k)) = s.A.col(inner[k]);
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(Af);
    cod.setThreshold(1e-12);
    const Vector d = cod.solve(s.b - s.A * x);
    Vector y = x;
    for (std::size_t k = 0; k < inner.size(); ++k) y(inner[k]) += d(static_cast<Eigen::Index>(k));
    const bool inside = (y.array() >= s.eta).all() && (y.array() <= 1.0).all();
    return inside && s.residual_of(y) < s.residual_of(x) ? y : x;
}

// Alternating projection between the affine constraints and the box
// [eta, 1], then the polish above and one exact row renormalization.
inline ProjectionResult alternate(const PolicyFeasibleSet& s, Vector x, double tol, int max_sweeps) {
    ProjectionResult r;
    if (s.dim() == 0) {
        r.P = Matrix::Zero(s.n, s.n);
        r.residual = s.b.size() ? s.b.cwiseAbs().maxCoeff() : 0.0;
        r.converged = r.residual <= tol;
        return r;
    }
    if (s.residual_of(x) <= tol) {
        r.P = s.to_matrix(x);
        r.residual = s.residual_of(x);
        r.converged = true;
        return r;
    }
    for (r.sweeps = 1; r.sweeps <= max_sweeps; ++r.sweeps) {
        x = affine_step(s, x);
        double box = 0.0;
        for (Eigen::Index e = 0; e < x.size(); ++e) box = std::max({box, s.eta - x(e), x(e) - 1.0});
        x = clip(x, s.eta, 1.0);
        if (box <= tol) {
            r.converged = true;
            break;
        }
    }
    r.sweeps = std::min(r.sweeps, max_sweeps);
    if (r.converged) x = polish(s, x);
    Matrix P = s.to_matrix(x);
    for (int i = 0; i < s.n; ++i) {
        const double rs = P.row(i).sum();
        if (rs > 0.0) P.row(i) /= rs;
    }
    r.P = P;
    r.residual = s.residual_of(s.to_vector(P));
    r.converged = r.converged && r.residual <= std::max(tol, 1e-9);
    return r;
}

} // namespace detail

namespace detail {

// Set construction without the eta precondition; eta = 0 gives the plain
// nonnegativity box used when redistributing traffic.
inline PolicyFeasibleSet build_set(const Matrix& support, const Vector& mu, double eta, const OptimizerConfig& config) {
    const int n = static_cast<int>(support.rows());
    if (support.cols() != n || mu.size() != n) throw Error("build_feasible_set: shape mismatch");
    if (!(mu.minCoeff() > 0.0) || std::abs(mu.sum() - 1.0) > 1e-12)
        throw Error("build_feasible_set: mu must be positive and sum to 1");
    PolicyFeasibleSet s;
    s.n = n;
    s.mu = mu;
    s.eta = eta;
    s.support = (support.array() > 0).cast<double>().matrix();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (s.support(i, j) > 0) s.free.push_back({i, j});
    const Eigen::Index m = static_cast<Eigen::Index>(s.free.size());
    s.A = Matrix::Zero(2 * n, m);
    s.b = Vector::Zero(2 * n);
    for (Eigen::Index e = 0; e < m; ++e) {
        const auto [i, j] = s.free[e];
        s.A(i, e) = 1.0;         // row sums
        s.A(n + j, e) = mu(i);   // (mu^T P)(j)
    }
    s.b.head(n).setOnes();
    s.b.tail(n) = mu;

    Eigen::JacobiSVD<Matrix> svd(s.A.transpose(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vector sv = svd.singularValues();
    const double cutoff = 1e-10 * std::max(1.0, sv.size() ? sv(0) : 0.0);
    Eigen::Index rank = 0;
    while (rank < sv.size() && sv(rank) > cutoff) ++rank;
    s.row_basis = svd.matrixU().leftCols(rank);
    s.nullspace_basis = svd.matrixU().rightCols(m - rank);
    // Minimum-norm particular solution via the same factorization.
    Vector coeff = Vector::Zero(rank);
    const Vector utb = svd.matrixV().leftCols(rank).transpose() * s.b;
    for (Eigen::Index r = 0; r < rank; ++r) coeff(r) = utb(r) / sv(r);
    s.particular = s.row_basis * coeff;

    const double affine_res = m ? (s.A * s.particular - s.b).cwiseAbs().maxCoeff() : s.b.cwiseAbs().maxCoeff();
    if (affine_res > config.phase1_tol) {
        s.status = SetStatus::infeasible;
        s.residual = affine_res;
        return s;
    }

    // Complete support: 1 mu is feasible when min mu >= eta (it is H for uniform mu).
    if (static_cast<Eigen::Index>(n) * n == m && mu.minCoeff() >= eta) {
        Matrix W = Vector::Ones(n) * mu.transpose();
        const double res = s.residual_of(s.to_vector(W));
        if (res <= config.projection_tol) {
            s.witness = W;
            s.witness_kind = (mu.array() == mu(0)).all() ? "uniform" : "rank-one";
            s.residual = res;
            s.status = SetStatus::feasible;
            return s;
        }
    }
    // Phase 1: alternating projection from the uniform-over-out-edges start.
    Matrix start = s.support;
    for (int i = 0; i < n; ++i) start.row(i) /= start.row(i).sum();
    auto pr = detail::alternate(s, s.to_vector(start), config.projection_tol, config.max_projection_sweeps);
    s.residual = pr.residual;
    if (pr.residual <= config.phase1_tol) {
        s.status = SetStatus::feasible;
        s.witness = pr.P;
        s.witness_kind = "phase1";
    } else {
        s.status = SetStatus::infeasible;
    }
    return s;
}

} // namespace detail

/// Builds the constraint system on `support` (n x n 0/1 mask), its null-space
/// basis, and a feasibility witness. An empty feasible set is reported via
/// `status`, never thrown. Throws on invalid mu or eta (preconditions).
inline PolicyFeasibleSet build_feasible_set(const Matrix& support, const Vector& mu, double eta,
                                            const OptimizerConfig& config = {}) {
    const int n = static_cast<int>(support.rows());
    int dmax = 0;
    for (int i = 0; i < n; ++i) dmax = std::max(dmax, static_cast<int>((support.row(i).array() > 0).count()));
    if (dmax == 0) throw Error("build_feasible_set: empty support");
    if (!(eta > 0.0) || eta > 1.0 / dmax)
        throw Error("build_feasible_set: eta must lie in (0, 1/d_max] = (0, " + detail::fmt_num(1.0 / dmax) + "]");
    return detail::build_set(support, mu, eta, config);
}

inline PolicyFeasibleSet build_feasible_set(const WeightedMarkovGraph& g, const Vector& mu, double eta,
                                            const OptimizerConfig& config = {}) {
    return build_feasible_set(g.support_mask(), mu, eta, config);
}

/// Projects P_raw (entries off the support ignored) onto the feasible set.
inline ProjectionResult project_to_feasible(const Matrix& P_raw, const PolicyFeasibleSet& s,
                                            const OptimizerConfig& config = {}) {
    if (s.status != SetStatus::feasible) throw Error("project_to_feasible: feasible set is empty");
    return detail::alternate(s, s.to_vector(P_raw), config.projection_tol, config.max_projection_sweeps);
}

// ---------------------------------------------------------------------------
// SPSA in the null space of the constraints.

struct TraceRow {
    int iter = 0;
    double objective = 0.0; // best so far
    double residual = 0.0;  // feasibility residual of the current iterate
};

struct SpsaResult {
    Matrix P;
    double objective = 0.0;
    std::vector<TraceRow> trace;
    int evaluations = 0;
};

/// Maximizes `f` over the feasible set. `f` may throw wmg::Error for
/// numerically degenerate points; those count as -inf. Deterministic for a
/// fixed config.
template <class F>
SpsaResult spsa_maximize(const PolicyFeasibleSet& s, const Matrix& P0, F&& f, const OptimizerConfig& cfg) {
    if (s.status != SetStatus::feasible) throw Error("spsa: feasible set is empty");
    auto safe = [&](const Matrix& P) {
        try {
            const double v = f(P);
            return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
        } catch (const Error&) {
            return -std::numeric_limits<double>::infinity();
        }
    };
    SpsaResult best;
    auto start = project_to_feasible(P0, s, cfg);
    best.P = start.P;
    best.objective = safe(best.P);
    best.evaluations = 1;
    best.trace.push_back({0, best.objective, start.residual});
    const Eigen::Index d = s.nullspace_basis.cols();
    if (d == 0 || cfg.iterations == 0) return best;

    const double A = cfg.stability_constant();
    for (int run = 0; run <= cfg.restarts; ++run) {
        std::mt19937_64 rng(cfg.seed + static_cast<std::uint64_t>(run));
        std::bernoulli_distribution coin(0.5);
        Vector x = s.to_vector(start.P);
        if (run > 0) {
            // Random feasible start: uniform draws on the support, projected.
            std::uniform_real_distribution<double> u(0.0, 1.0);
            Matrix R = Matrix::Zero(s.n, s.n);
            for (const auto& [i, j] : s.free) R(i, j) = u(rng);
            for (int i = 0; i < s.n; ++i) R.row(i) /= R.row(i).sum();
            x = s.to_vector(project_to_feasible(R, s, cfg).P);
        }
        for (int k = 0; k < cfg.iterations; ++k) {
            const double ak = cfg.a / std::pow(k + 1 + A, cfg.alpha);
            const double ck = cfg.c / std::pow(k + 1, cfg.gamma);
            Vector r(d);
            for (Eigen::Index t = 0; t < d; ++t) r(t) = coin(rng) ? 1.0 : -1.0;
            const Vector delta = s.nullspace_basis * r;
            const auto plus = project_to_feasible(s.to_matrix(x + ck * delta), s, cfg);
            const auto minus = project_to_feasible(s.to_matrix(x - ck * delta), s, cfg);
            const double fp = safe(plus.P), fm = safe(minus.P);
            best.evaluations += 2;
            for (const auto* cand : {&plus, &minus}) {
                const double v = cand == &plus ? fp : fm;
                if (v > best.objective) {
                    best.objective = v;
                    best.P = cand->P;
                }
            }
            Vector ghat = Vector::Zero(d);
            if (std::isfinite(fp) && std::isfinite(fm)) ghat = ((fp - fm) / (2.0 * ck)) * r;
            else if (std::isfinite(fp)) ghat = r;
            else if (std::isfinite(fm)) ghat = -r;
            const auto next = project_to_feasible(s.to_matrix(x + ak * (s.nullspace_basis * ghat)), s, cfg);
            x = s.to_vector(next.P);
            const double fx = safe(next.P);
            best.evaluations += 1;
            if (fx > best.objective) {
                best.objective = fx;
                best.P = next.P;
            }
            best.trace.push_back({static_cast<int>(best.trace.size()), best.objective, next.residual});
        }
    }
    return best;
}

// Surprise index and V_W of P under fixed weight moments.
struct PolicyScore {
    double K_W = 0.0;
    double V_W = 0.0;
    double S = 0.0;
};

inline PolicyScore score_policy(const Matrix& P, const Matrix& W, const Matrix& W2) {
    const auto a = analyze_chain(P, W);
    const Matrix M = weighted_mean_passage(a, W);
    const Matrix M2 = weighted_second_moment(a, W, W2, M);
    const Matrix V = passage_variance(M, M2);
    PolicyScore s;
    s.K_W = a.pi_w.dot(M * a.pi_w);
    s.V_W = a.pi_w.dot(V * a.pi_w);
    s.S = surprise_index(s.K_W, s.V_W);
    return s;
}

inline PolicyScore score_policy(const Matrix& P, const WeightedMarkovGraph& g) {
    return score_policy(P, g.W(), g.W2());
}

/// SPSA ascent on S starting from the projection of `start` (the witness when
/// omitted). The objective traced is S.
inline SpsaResult maximize_surprise(const WeightedMarkovGraph& g, const PolicyFeasibleSet& s,
                                    const OptimizerConfig& cfg, std::optional<Matrix> start = std::nullopt) {
    return spsa_maximize(s, start.value_or(s.witness),
                         [&](const Matrix& P) { return score_policy(P, g).S; }, cfg);
}

/// SPSA descent on V_W, run as ascent on -log V_W; the traced objective is
/// reported back as V_W.
inline SpsaResult minimize_variance(const WeightedMarkovGraph& g, const PolicyFeasibleSet& s,
                                    const OptimizerConfig& cfg, std::optional<Matrix> start = std::nullopt) {
    auto r = spsa_maximize(
        s, start.value_or(s.witness),
        [&](const Matrix& P) {
            const double v = score_policy(P, g).V_W;
            return v > 0.0 ? -std::log(v) : std::numeric_limits<double>::infinity();
        },
        cfg);
    r.objective = std::exp(-r.objective);
    for (auto& row : r.trace) row.objective = std::exp(-row.objective);
    return r;
}

// ---------------------------------------------------------------------------
// Minimal intervention on the weights for a fixed transition matrix.

enum class InterventionStatus { optimal, infeasible };

inline const char* to_string(InterventionStatus s) {
    return s == InterventionStatus::optimal ? "optimal" : "infeasible";
}

struct InterventionResult {
    InterventionStatus status = InterventionStatus::infeasible;
    Matrix W;                // adjusted weights (input weights when infeasible)
    double objective = 0.0;  // ||W - W_orig||^2
    double K = 0.0;          // K(P, W)
    double V = 0.0;          // pi V pi^T at W
    double k_residual = 0.0; // max(0, K - K_ref)
    double v_residual = 0.0; // max(0, V - V_ref)
    std::string reason;
};

namespace detail {

// Euclidean projection onto {g^T x <= cap} intersected with [lo, hi]
// (g > 0), by bisection on the multiplier. Returns nullopt when empty.
inline std::optional<Vector> project_halfspace_box(const Vector& y, const Vector& g, double cap,
                                                   const Vector& lo, const Vector& hi) {
    if (g.dot(lo) > cap * (1.0 + 1e-14) + 1e-14) return std::nullopt;
    Vector x = y.cwiseMax(lo).cwiseMin(hi);
    if (g.dot(x) <= cap) return x;
    double l0 = 0.0, l1 = 1.0;
    auto at = [&](double lam) { return (y - lam * g).cwiseMax(lo).cwiseMin(hi).eval(); };
    while (g.dot(at(l1)) > cap) {
        l1 *= 2.0;
        if (l1 > 1e300) return at(l1);
    }
    for (int it = 0; it < 200 && l1 - l0 > 1e-15 * l1; ++it) {
        const double mid = 0.5 * (l0 + l1);
        (g.dot(at(mid)) > cap ? l0 : l1) = mid;
    }
    return at(l1);
}

} // namespace detail

/// Minimizes ||W - W_orig||^2 over the surviving edges of `after` subject to
/// K(P, W) <= K_ref, W_min <= W <= W_max and V(P, W) <= V_ref, where P and
/// the starting weights W_orig are those of `after`. Linear K and the box are
/// handled by exact projection; the variance constraint by a quadratic
/// penalty with projected gradient steps.
inline InterventionResult minimal_intervention(const WeightedMarkovGraph& after, const Matrix& W_min,
                                               const Matrix& W_max, double K_ref, double V_ref,
                                               const OptimizerConfig& cfg = {}) {
    const auto& edges = after.edges();
    const Eigen::Index m = static_cast<Eigen::Index>(edges.size());
    const auto a = analyze_chain(after);
    Vector w0(m), lo(m), hi(m), gK(m);
    const Matrix dK = d_K_dW(a);
    for (Eigen::Index e = 0; e < m; ++e) {
        const auto [i, j] = edges[e];
        w0(e) = after.W()(i, j);
        lo(e) = W_min(i, j);
        hi(e) = W_max(i, j);
        gK(e) = dK(i, j);
        if (lo(e) > hi(e)) throw Error("minimal_intervention: W_min exceeds W_max");
    }
    auto to_W = [&](const Vector& x) {
        Matrix W = Matrix::Zero(after.n(), after.n());
        for (Eigen::Index e = 0; e < m; ++e) W(edges[e].from, edges[e].to) = x(e);
        return W;
    };
    auto variance_of = [&](const Vector& x) {
        const auto g = after.with_weights(to_W(x));
        const Matrix M = weighted_mean_passage(a, g.W());
        const Matrix M2 = weighted_second_moment(a, g.W(), g.W2(), M);
        return a.pi.dot((M2 - M.cwiseProduct(M)) * a.pi);
    };
    auto variance_grad = [&](const Vector& x) {
        const auto g = after.with_weights(to_W(x));
        const Matrix M = weighted_mean_passage(a, g.W());
        PassageMoments pm;
        pm.L = mean_passage_lengths(a);
        pm.M = M;
        pm.M2 = weighted_second_moment(a, g.W(), g.W2(), M);
        pm.V = pm.M2 - M.cwiseProduct(M);
        ChainAnalysis aw = a;
        aw.Ubar = a.P.cwiseProduct(g.W()).rowwise().sum();
        aw.Y = a.pi.dot(aw.Ubar);
        aw.pi_w = a.pi.cwiseProduct(aw.Ubar) / aw.Y;
        const Matrix G = weight_gradients(aw, g.W(), w2_slopes(g), pm).V_scalar;
        Vector out(m);
        for (Eigen::Index e = 0; e < m; ++e) out(e) = G(edges[e].from, edges[e].to);
        return out;
    };
    auto finish = [&](InterventionResult r, const Vector& x) {
        r.W = to_W(x);
        r.objective = (x - w0).squaredNorm();
        r.K = kemeny_trace_form(a, r.W);
        r.V = variance_of(x);
        r.k_residual = std::max(0.0, r.K - K_ref);
        r.v_residual = std::max(0.0, r.V - V_ref);
        return r;
    };
    const double v_cap = V_ref * (1.0 + cfg.variance_slack);

    InterventionResult res;
    // Untouched weights already feasible (inside the box, both constraints).
    if ((w0.array() >= lo.array()).all() && (w0.array() <= hi.array()).all() &&
        gK.dot(w0) <= K_ref && variance_of(w0) <= V_ref) {
        res.status = InterventionStatus::optimal;
        return finish(res, w0);
    }
    auto proj = [&](const Vector& y) { return detail::project_halfspace_box(y, gK, K_ref, lo, hi); };
    const auto x0 = proj(w0);
    if (!x0) {
        res.status = InterventionStatus::infeasible;
        res.reason = "Kemeny bound unreachable within weight bounds";
        return finish(res, w0.cwiseMax(lo).cwiseMin(hi));
    }
    // Nearest point of the convex part; optimal outright if V is satisfied.
    if (variance_of(*x0) <= V_ref) {
        res.status = InterventionStatus::optimal;
        return finish(res, *x0);
    }

    const double scale = std::max(w0.squaredNorm(), 1e-300);
    Vector x = *x0;
    double rho = cfg.penalty_rho0;
    for (int round = 0; round < cfg.penalty_rounds; ++round, rho *= cfg.penalty_growth) {
        auto phi = [&](const Vector& z, double& v) {
            v = variance_of(z);
            const double viol = std::max(0.0, v / V_ref - 1.0);
            return (z - w0).squaredNorm() / scale + rho * viol * viol;
        };
        double v = 0.0;
        double f = phi(x, v);
        double step = 1.0;
        for (int it = 0; it < cfg.penalty_inner_iterations; ++it) {
            const double viol = std::max(0.0, v / V_ref - 1.0);
            Vector grad = 2.0 * (x - w0) / scale;
            if (viol > 0.0) grad += (2.0 * rho * viol / V_ref) * variance_grad(x);
            bool moved = false;
            for (int bt = 0; bt < 40; ++bt) {
                const Vector cand = *proj(x - step * grad);
                double vc = 0.0;
                const double fc = phi(cand, vc);
                if (fc <= f - 1e-4 / step * (cand - x).squaredNorm()) {
                    moved = (cand - x).lpNorm<Eigen::Infinity>() > 1e-14 * (1.0 + x.lpNorm<Eigen::Infinity>());
                    x = cand;
                    f = fc;
                    v = vc;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if (!moved) break;
        }
    }
    // Restoration: descend on V alone inside the convex set if still violated.
    double v = variance_of(x);
    for (int it = 0; it < cfg.penalty_inner_iterations && v > v_cap; ++it) {
        const Vector grad = variance_grad(x);
        double step = 1.0 / std::max(grad.lpNorm<Eigen::Infinity>(), 1e-300) *
                      std::max(1e-3, hi.maxCoeff() - lo.minCoeff());
        bool moved = false;
        for (int bt = 0; bt < 60; ++bt) {
            const Vector cand = *proj(x - step * grad);
            const double vc = variance_of(cand);
            if (vc < v) {
                x = cand;
                v = vc;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
    }
    if (v <= v_cap) {
        res.status = InterventionStatus::optimal;
    } else {
        res.status = InterventionStatus::infeasible;
        res.reason = "variance bound not reached";
    }
    return finish(res, x);
}

// ---------------------------------------------------------------------------

/// Hybrid occupancy: pi* on the destinations, alpha pi' elsewhere, with alpha
/// chosen so the result sums to one.
inline Vector hybrid_target(const Vector& pi_star, const Vector& pi_prime, const std::vector<int>& destinations) {
    const Eigen::Index n = pi_star.size();
    if (pi_prime.size() != n) throw Error("hybrid_target: size mismatch");
    std::vector<char> is_dest(n, 0);
    for (int d : destinations) {
        if (d < 0 || d >= n) throw Error("hybrid_target: destination out of range");
        is_dest[d] = 1;
    }
    double mass_d = 0.0, mass_t = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (is_dest[i]) mass_d += pi_star(i);
        else mass_t += pi_prime(i);
    }
    if (!(mass_t > 0.0)) throw Error("hybrid_target: destinations must be a proper subset");
    const double alpha = (1.0 - mass_d) / mass_t;
    Vector out(n);
    for (Eigen::Index i = 0; i < n; ++i) out(i) = is_dest[i] ? pi_star(i) : alpha * pi_prime(i);
    return out;
}

} // namespace wmg
