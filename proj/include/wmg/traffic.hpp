#pragma once

#include "wmg/optimizer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace wmg {

// ---------------------------------------------------------------------------
// Instances

/// Random geometric graph on the unit square: bidirectional edges between
/// points closer than r = sqrt(d / (n pi)), redrawn until connected. P is the
/// simple random walk, W ~ U[w_lo, w_hi] per directed edge.
inline WeightedMarkovGraph gen_geometric_graph(int n, double degree, std::uint64_t seed, double w_lo = 1.0,
                                               double w_hi = 3.0) {
    if (n < 2) throw Error("gen_geometric_graph: n must be at least 2");
    if (!(degree > 0.0)) throw Error("gen_geometric_graph: degree must be positive");
    if (!(w_lo > 0.0) || w_hi < w_lo) throw Error("gen_geometric_graph: bad weight range");
    const double pi = std::acos(-1.0);
    const double r2 = degree / (n * pi);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int attempt = 0; attempt < 100000; ++attempt) {
        std::vector<double> x(n), y(n);
        for (int i = 0; i < n; ++i) {
            x[i] = unif(rng);
            y[i] = unif(rng);
        }
        Matrix support = Matrix::Zero(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (i != j && (x[i] - x[j]) * (x[i] - x[j]) + (y[i] - y[j]) * (y[i] - y[j]) < r2) support(i, j) = 1.0;
        if (!strongly_connected(support)) continue;
        std::vector<EdgeSpec> specs;
        for (int i = 0; i < n; ++i) {
            const double deg = support.row(i).sum();
            for (int j = 0; j < n; ++j)
                if (support(i, j) > 0.0) specs.push_back({i, j, 1.0 / deg, w_lo + (w_hi - w_lo) * unif(rng)});
        }
        return make_graph(n, specs);
    }
    throw Error("gen_geometric_graph: no connected draw (degree too small for n)");
}

// ---------------------------------------------------------------------------
// Policies

enum class PolicyKind { unsupervised, supervised, locally_supervised };

inline const char* to_string(PolicyKind k) {
    switch (k) {
    case PolicyKind::unsupervised: return "unsupervised";
    case PolicyKind::supervised: return "supervised";
    case PolicyKind::locally_supervised: return "locally-supervised";
    }
    return "?";
}

inline PolicyKind parse_policy_kind(const std::string& s) {
    if (s == "unsupervised") return PolicyKind::unsupervised;
    if (s == "supervised") return PolicyKind::supervised;
    if (s == "locally-supervised") return PolicyKind::locally_supervised;
    throw ParseError("policy", "expected unsupervised, supervised or locally-supervised, got '" + s + "'");
}

struct PolicyOutcome {
    bool feasible = false;
    Matrix P;           // redistributed transition matrix (failed entry zero)
    std::string reason; // set when infeasible
};

namespace detail {

inline Matrix drop_and_renormalize(const Matrix& P, int i, int j) {
    Matrix out = P;
    out(i, j) = 0.0;
    const double s = out.row(i).sum();
    if (s > 0.0) out.row(i) /= s;
    return out;
}

// Flow below this is treated as absent when checking that traffic still
// reaches every node; a chain held together by such entries is numerically
// reducible.
inline constexpr double kNegligibleFlow = 1e-9;

// Nearest P >= 0 on `roads` with target P = target; the flow it leaves must
// still reach every node.
inline PolicyOutcome project_onto_occupancy(const Matrix& start, const Matrix& roads, const Vector& target,
                                            const OptimizerConfig& cfg) {
    PolicyOutcome o;
    const auto set = build_set(roads, target, 0.0, cfg);
    if (set.status != SetStatus::feasible) {
        o.reason = "no transition matrix with the required occupancy on the surviving roads";
        return o;
    }
    const auto proj = project_to_feasible(start, set, cfg);
    if (!proj.converged) {
        o.reason = "projection did not converge (residual " + fmt_num(proj.residual) + ")";
        return o;
    }
    if (!strongly_connected((proj.P.array() > kNegligibleFlow).cast<double>().matrix())) {
        o.reason = "projected flow is reducible";
        return o;
    }
    o.feasible = true;
    o.P = proj.P;
    return o;
}

} // namespace detail

/// Redistributes traffic after road (i, j) fails. `P` is the current flow,
/// `roads` the 0/1 mask of roads before the failure (P may leave some of them
/// unused), `pi_star` the occupancy of the original network.
inline PolicyOutcome apply_policy(const Matrix& P, const Matrix& roads, Edge failed, PolicyKind kind,
                                  const std::vector<int>& destinations, const Vector& pi_star,
                                  const OptimizerConfig& cfg = {}) {
    const auto [i, j] = failed;
    if (!(roads(i, j) > 0.0)) throw Error("apply_policy: failed edge is not a surviving road");
    PolicyOutcome o;
    const Matrix Pp = detail::drop_and_renormalize(P, i, j);
    if (!(Pp.row(i).sum() > 0.0)) {
        o.reason = "failed edge carried all traffic out of node " + std::to_string(i);
        return o;
    }
    Matrix left = roads;
    left(i, j) = 0.0;
    switch (kind) {
    case PolicyKind::unsupervised:
        o.feasible = true;
        o.P = Pp;
        return o;
    case PolicyKind::supervised: return detail::project_onto_occupancy(Pp, left, pi_star, cfg);
    case PolicyKind::locally_supervised: {
        if (destinations.empty() || static_cast<int>(destinations.size()) >= P.rows())
            throw Error("apply_policy: destinations must be a non-empty proper subset");
        const Matrix flow = (Pp.array() > 0.0).cast<double>().matrix();
        if (!strongly_connected(flow)) {
            o.reason = "naive redistribution is reducible; its occupancy is not unique";
            return o;
        }
        const Vector target = hybrid_target(pi_star, stationary_of(Pp), destinations);
        return detail::project_onto_occupancy(Pp, left, target, cfg);
    }
    }
    return o;
}

inline PolicyOutcome apply_policy(const WeightedMarkovGraph& g, Edge failed, PolicyKind kind,
                                  const std::vector<int>& destinations, const Vector& pi_star,
                                  const OptimizerConfig& cfg = {}) {
    return apply_policy(g.P(), g.support_mask(), failed, kind, destinations, pi_star, cfg);
}

// ---------------------------------------------------------------------------
// Cascades

struct CascadeConfig {
    int n = 10;
    double degree = 5.0;
    std::vector<int> destinations{2, 5, 9};
    double w_lo = 1.0, w_hi = 3.0;
    double w_min_factor = 2.0 / 3.0, w_max_factor = 4.0 / 3.0;
    int max_steps = 0;  // 0: run until infeasible or nothing removable
    OptimizerConfig optimizer;
};

inline void to_json(nlohmann::json& j, const CascadeConfig& c) {
    j = nlohmann::json{{"n", c.n},
                       {"degree", c.degree},
                       {"destinations", c.destinations},
                       {"w_lo", c.w_lo},
                       {"w_hi", c.w_hi},
                       {"w_min_factor", c.w_min_factor},
                       {"w_max_factor", c.w_max_factor},
                       {"max_steps", c.max_steps},
                       {"optimizer", c.optimizer}};
}

inline void from_json(const nlohmann::json& j, CascadeConfig& c) {
    if (!j.is_object()) throw ParseError("cascade", "config must be an object");
    for (const auto& [key, v] : j.items()) {
        try {
            if (key == "n") c.n = v.get<int>();
            else if (key == "degree") c.degree = v.get<double>();
            else if (key == "destinations") c.destinations = v.get<std::vector<int>>();
            else if (key == "w_lo") c.w_lo = v.get<double>();
            else if (key == "w_hi") c.w_hi = v.get<double>();
            else if (key == "w_min_factor") c.w_min_factor = v.get<double>();
            else if (key == "w_max_factor") c.w_max_factor = v.get<double>();
            else if (key == "max_steps") c.max_steps = v.get<int>();
            else if (key == "optimizer") c.optimizer = v.get<OptimizerConfig>();
            else throw ParseError("cascade." + key, "unknown key");
        } catch (const nlohmann::json::exception&) {
            throw ParseError("cascade." + key, "wrong type");
        }
    }
    if (c.n < 2 || !(c.degree > 0) || !(c.w_lo > 0) || c.w_hi < c.w_lo || c.max_steps < 0 ||
        !(c.w_min_factor > 0) || c.w_max_factor < c.w_min_factor)
        throw ParseError("cascade", "parameters out of range");
    for (int d : c.destinations)
        if (d < 0 || d >= c.n) throw ParseError("cascade.destinations", "node out of range");
}

enum class Termination { disconnection, projection_infeasible, optimization_infeasible, step_budget };

inline const char* to_string(Termination t) {
    switch (t) {
    case Termination::disconnection: return "disconnection";
    case Termination::projection_infeasible: return "projection-infeasible";
    case Termination::optimization_infeasible: return "optimization-infeasible";
    case Termination::step_budget: return "step-budget";
    }
    return "?";
}

struct CascadeStep {
    int step = 0;
    Edge removed;
    double K_unopt = 0.0, K_opt = 0.0; // K(P~, W_orig), K(P~, W~)
    double V_unopt = 0.0, V_opt = 0.0;
    double dK = 0.0, dV = 0.0;         // unoptimized minus optimized
    Vector dpi;                        // |pi(P~) - pi*| per node
    double mean_dpi = 0.0;
    double max_dpi_dest = 0.0;
    double weight_change = 0.0;        // ||W~ - W||^2 of this step
};

struct CascadeRun {
    std::uint64_t seed = 0;
    PolicyKind policy = PolicyKind::unsupervised;
    std::vector<Edge> removals; // successful removals, in order
    std::vector<CascadeStep> steps;
    Termination reason = Termination::disconnection;
    std::string detail;
    double K_ref = 0.0, V_ref = 0.0;

    // A run succeeds when it ends without hitting an infeasible step.
    bool success() const {
        return reason == Termination::disconnection || reason == Termination::step_budget;
    }
    double total_dK() const {
        double s = 0.0;
        for (const auto& st : steps) s += st.dK;
        return s;
    }
    double total_dV() const {
        double s = 0.0;
        for (const auto& st : steps) s += st.dV;
        return s;
    }
};

/// Roads (entries of the 0/1 mask) whose removal keeps it strongly connected.
inline std::vector<Edge> removable_edges(const Matrix& roads) {
    std::vector<Edge> out;
    Matrix support = roads;
    for (Eigen::Index i = 0; i < roads.rows(); ++i)
        for (Eigen::Index j = 0; j < roads.cols(); ++j) {
            if (!(roads(i, j) > 0.0)) continue;
            support(i, j) = 0.0;
            if (strongly_connected(support)) out.push_back({static_cast<int>(i), static_cast<int>(j)});
            support(i, j) = 1.0;
        }
    return out;
}

inline std::vector<Edge> removable_edges(const WeightedMarkovGraph& g) { return removable_edges(g.support_mask()); }

/// Sequential road failures on `g`. Each step removes a uniformly drawn
/// non-disconnecting road, redistributes traffic per `policy`, then solves the
/// minimal-intervention problem against K and V of the original network.
inline CascadeRun run_cascade(const WeightedMarkovGraph& g0, PolicyKind policy, const CascadeConfig& cfg,
                              std::uint64_t seed) {
    CascadeRun run;
    run.seed = seed;
    run.policy = policy;
    const auto a0 = analyze_chain(g0);
    const Vector& pi_star = a0.pi;
    const Matrix W_orig = g0.W();
    const Matrix W_min = cfg.w_min_factor * W_orig;
    const Matrix W_max = cfg.w_max_factor * W_orig;
    {
        const auto m0 = passage_moments(a0, g0);
        run.K_ref = a0.pi.dot(m0.M * a0.pi);
        run.V_ref = a0.pi.dot(m0.V * a0.pi);
    }
    std::vector<char> is_dest(g0.n(), 0);
    for (int d : cfg.destinations) is_dest.at(d) = 1;

    std::seed_seq sq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0xcacadeu};
    std::mt19937_64 rng(sq);
    Matrix roads = g0.support_mask();
    Matrix P = g0.P();
    Matrix W = W_orig;
    for (int step = 1;; ++step) {
        if (cfg.max_steps > 0 && step > cfg.max_steps) {
            run.reason = Termination::step_budget;
            return run;
        }
        const auto candidates = removable_edges(roads);
        if (candidates.empty()) {
            run.reason = Termination::disconnection;
            return run;
        }
        const Edge e = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];

        const auto out = apply_policy(P, roads, e, policy, cfg.destinations, pi_star, cfg.optimizer);
        if (!out.feasible) {
            run.reason = Termination::projection_infeasible;
            run.detail = out.reason;
            return run;
        }
        const auto damaged = make_graph(out.P, W);
        InterventionResult res;
        try {
            res = minimal_intervention(damaged, W_min, W_max, run.K_ref, run.V_ref, cfg.optimizer);
        } catch (const SingularSystemError& ex) {
            res.status = InterventionStatus::infeasible;
            res.reason = ex.what();
        }
        if (res.status != InterventionStatus::optimal) {
            run.reason = Termination::optimization_infeasible;
            run.detail = res.reason;
            return run;
        }

        CascadeStep st;
        st.step = step;
        st.removed = e;
        const auto unopt = damaged.with_weights(W_orig);
        const auto au = analyze_chain(unopt);
        {
            const auto mu = passage_moments(au, unopt);
            st.K_unopt = au.pi.dot(mu.M * au.pi);
            st.V_unopt = au.pi.dot(mu.V * au.pi);
        }
        st.K_opt = res.K;
        st.V_opt = res.V;
        st.dK = st.K_unopt - st.K_opt;
        st.dV = st.V_unopt - st.V_opt;
        st.dpi = (au.pi - pi_star).cwiseAbs();
        st.mean_dpi = st.dpi.mean();
        for (int i = 0; i < g0.n(); ++i)
            if (is_dest[i]) st.max_dpi_dest = std::max(st.max_dpi_dest, st.dpi(i));
        st.weight_change = res.objective;
        run.steps.push_back(std::move(st));
        run.removals.push_back(e);

        roads(e.from, e.to) = 0.0;
        P = out.P;
        // Unused roads keep their weights; only carried flow is re-timed.
        for (const auto& [i, j] : damaged.edges()) W(i, j) = res.W(i, j);
    }
}
// ---------------------------------------------------------------------------
// Studies and aggregation

struct CascadeSummary {
    PolicyKind policy = PolicyKind::unsupervised;
    int runs = 0;
    int successful_runs = 0;
    double mean_dK = 0.0;        // per-run cumulative improvement, averaged over runs
    double mean_dV = 0.0;
    double mean_dpi = 0.0;       // final-state mean |pi - pi*|, averaged over runs
    double max_dpi_dest = 0.0;   // over every recorded step of every run
    double mean_steps = 0.0;
};

/// Table-style summary of the runs of one policy.
inline CascadeSummary aggregate_cascades(const std::vector<CascadeRun>& runs) {
    if (runs.empty()) throw Error("aggregate_cascades: no runs");
    CascadeSummary s;
    s.policy = runs.front().policy;
    s.runs = static_cast<int>(runs.size());
    for (const auto& r : runs) {
        if (r.policy != s.policy) throw Error("aggregate_cascades: runs mix policies");
        if (r.success()) ++s.successful_runs;
        s.mean_dK += r.total_dK();
        s.mean_dV += r.total_dV();
        if (!r.steps.empty()) s.mean_dpi += r.steps.back().mean_dpi;
        for (const auto& st : r.steps) s.max_dpi_dest = std::max(s.max_dpi_dest, st.max_dpi_dest);
        s.mean_steps += static_cast<double>(r.steps.size());
    }
    s.mean_dK /= s.runs;
    s.mean_dV /= s.runs;
    s.mean_dpi /= s.runs;
    s.mean_steps /= s.runs;
    return s;
}

struct CascadeStudy {
    std::vector<PolicyKind> policies;
    std::vector<std::uint64_t> seeds;
    std::vector<std::vector<CascadeRun>> runs; // [policy][seed index]
    std::vector<CascadeSummary> summary;       // one per policy
};

/// Instance per seed, then every policy on the same instance and removal
/// stream. Seeds run on `jobs` threads; results do not depend on `jobs`.
inline CascadeStudy run_cascade_study(const CascadeConfig& cfg, const std::vector<PolicyKind>& policies,
                                      const std::vector<std::uint64_t>& seeds, int jobs = 1) {
    if (policies.empty() || seeds.empty()) throw Error("run_cascade_study: need at least one policy and seed");
    CascadeStudy st;
    st.policies = policies;
    st.seeds = seeds;
    st.runs.assign(policies.size(), std::vector<CascadeRun>(seeds.size()));
    std::atomic<std::size_t> next{0};
    std::vector<std::string> errors(seeds.size());
    auto worker = [&] {
        for (std::size_t k; (k = next.fetch_add(1)) < seeds.size();) {
            try {
                const auto g = gen_geometric_graph(cfg.n, cfg.degree, seeds[k], cfg.w_lo, cfg.w_hi);
                for (std::size_t p = 0; p < policies.size(); ++p)
                    st.runs[p][k] = run_cascade(g, policies[p], cfg, seeds[k]);
            } catch (const std::exception& ex) {
                errors[k] = ex.what();
            }
        }
    };
    const int t = std::max(1, std::min<int>(jobs, static_cast<int>(seeds.size())));
    std::vector<std::thread> pool;
    for (int i = 1; i < t; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    for (std::size_t k = 0; k < seeds.size(); ++k)
        if (!errors[k].empty()) throw Error("cascade seed " + std::to_string(seeds[k]) + ": " + errors[k]);
    for (const auto& r : st.runs) st.summary.push_back(aggregate_cascades(r));
    return st;
}

} // namespace wmg
