#pragma once

#include "wmg/optimizer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace wmg {

enum class TargetRule { uniform, obstacle_adjacent };

/// 4-neighbour lattice with optional obstacle cells.
struct GridSpec {
    int rows = 4;
    int cols = 4;
    std::vector<std::pair<int, int>> obstacles; // (row, col), 0-based
    double w_lo = 1.0, w_hi = 3.0;              // mean weight ~ U[w_lo, w_hi]
    bool stochastic = false;
    // Stochastic weights: a `high_fraction` share of edges draws cv from the
    // high range, the rest from the low range.
    double cv_low_lo = 0.30, cv_low_hi = 0.70;
    double cv_high_lo = 1.05, cv_high_hi = 1.70;
    double high_fraction = 0.4;
    WeightKind dist = WeightKind::lognormal;
    TargetRule target = TargetRule::uniform;
    double priority = 2.0; // coverage factor of obstacle-adjacent nodes
    double eta = 1e-4;
    std::uint64_t seed = 1;
};

inline const char* to_string(TargetRule t) {
    return t == TargetRule::uniform ? "uniform" : "obstacle_adjacent";
}

inline void to_json(nlohmann::json& j, const GridSpec& s) {
    nlohmann::json obs = nlohmann::json::array();
    for (const auto& [r, c] : s.obstacles) obs.push_back({r, c});
    j = nlohmann::json{{"rows", s.rows},
                       {"cols", s.cols},
                       {"obstacles", obs},
                       {"w_lo", s.w_lo},
                       {"w_hi", s.w_hi},
                       {"stochastic", s.stochastic},
                       {"cv_low", {s.cv_low_lo, s.cv_low_hi}},
                       {"cv_high", {s.cv_high_lo, s.cv_high_hi}},
                       {"high_fraction", s.high_fraction},
                       {"dist", to_string(s.dist)},
                       {"target", to_string(s.target)},
                       {"priority", s.priority},
                       {"eta", s.eta},
                       {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, GridSpec& s) {
    if (!j.is_object()) throw ParseError("grid", "spec must be an object");
    auto range = [](const nlohmann::json& v, const std::string& key, double& lo, double& hi) {
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
            throw ParseError("grid." + key, "expected [lo, hi]");
        lo = v[0].get<double>();
        hi = v[1].get<double>();
    };
    for (const auto& [key, v] : j.items()) {
        try {
            if (key == "rows") s.rows = v.get<int>();
            else if (key == "cols") s.cols = v.get<int>();
            else if (key == "obstacles") {
                s.obstacles.clear();
                for (const auto& o : v) {
                    if (!o.is_array() || o.size() != 2) throw ParseError("grid.obstacles", "expected [row, col]");
                    s.obstacles.emplace_back(o[0].get<int>(), o[1].get<int>());
                }
            } else if (key == "w_lo") s.w_lo = v.get<double>();
            else if (key == "w_hi") s.w_hi = v.get<double>();
            else if (key == "stochastic") s.stochastic = v.get<bool>();
            else if (key == "cv_low") range(v, key, s.cv_low_lo, s.cv_low_hi);
            else if (key == "cv_high") range(v, key, s.cv_high_lo, s.cv_high_hi);
            else if (key == "high_fraction") s.high_fraction = v.get<double>();
            else if (key == "dist") {
                const auto d = v.get<std::string>();
                if (d == "lognormal") s.dist = WeightKind::lognormal;
                else if (d == "gamma") s.dist = WeightKind::gamma;
                else throw ParseError("grid.dist", "expected lognormal or gamma");
            } else if (key == "target") {
                const auto t = v.get<std::string>();
                if (t == "uniform") s.target = TargetRule::uniform;
                else if (t == "obstacle_adjacent") s.target = TargetRule::obstacle_adjacent;
                else throw ParseError("grid.target", "expected uniform or obstacle_adjacent");
            } else if (key == "priority") s.priority = v.get<double>();
            else if (key == "eta") s.eta = v.get<double>();
            else if (key == "seed") s.seed = v.get<std::uint64_t>();
            else throw ParseError("grid." + key, "unknown key");
        } catch (const nlohmann::json::exception&) {
            throw ParseError("grid." + key, "wrong type");
        }
    }
    if (s.rows < 1 || s.cols < 1 || !(s.w_lo > 0) || s.w_hi < s.w_lo || !(s.eta > 0) || !(s.priority > 0) ||
        s.high_fraction < 0 || s.high_fraction > 1)
        throw ParseError("grid", "parameters out of range");
}

struct Grid {
    WeightedMarkovGraph graph; // P is the simple random walk on the lattice
    Vector mu;
    std::vector<std::pair<int, int>> cells; // node index -> (row, col)
    std::vector<int> priority_nodes;        // obstacle-adjacent nodes
};

/// Lattice graph, sampled weights and target distribution for a spec.
inline Grid build_grid(const GridSpec& spec) {
    if (spec.rows < 1 || spec.cols < 1) throw Error("build_grid: empty grid");
    std::set<std::pair<int, int>> blocked(spec.obstacles.begin(), spec.obstacles.end());
    for (const auto& [r, c] : blocked)
        if (r < 0 || c < 0 || r >= spec.rows || c >= spec.cols) throw Error("build_grid: obstacle off the grid");
    Grid g;
    std::vector<int> index(spec.rows * spec.cols, -1);
    for (int r = 0; r < spec.rows; ++r)
        for (int c = 0; c < spec.cols; ++c)
            if (!blocked.count({r, c})) {
                index[r * spec.cols + c] = static_cast<int>(g.cells.size());
                g.cells.emplace_back(r, c);
            }
    const int n = static_cast<int>(g.cells.size());
    if (n == 0) throw Error("build_grid: every cell is an obstacle");

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<EdgeSpec> specs;
    const int dr[4] = {-1, 0, 1, 0}, dc[4] = {0, 1, 0, -1};
    for (int v = 0; v < n; ++v) {
        const auto [r, c] = g.cells[v];
        for (int k = 0; k < 4; ++k) {
            const int rr = r + dr[k], cc = c + dc[k];
            if (rr < 0 || cc < 0 || rr >= spec.rows || cc >= spec.cols) continue;
            const int u = index[rr * spec.cols + cc];
            if (u < 0) continue;
            EdgeSpec e;
            e.from = v;
            e.to = u;
            specs.push_back(e);
        }
    }
    // Edge order is (from, to) sorted, so draws are stable under relabeling.
    std::sort(specs.begin(), specs.end(), [](const EdgeSpec& a, const EdgeSpec& b) {
        return Edge{a.from, a.to} < Edge{b.from, b.to};
    });
    std::vector<int> deg(n, 0);
    for (const auto& e : specs) ++deg[e.from];
    for (auto& e : specs) {
        e.p = 1.0 / deg[e.from];
        e.w_mean = spec.w_lo + (spec.w_hi - spec.w_lo) * unif(rng);
    }
    if (spec.stochastic) {
        const std::size_t m = specs.size();
        const auto high = static_cast<std::size_t>(std::llround(spec.high_fraction * static_cast<double>(m)));
        std::vector<std::size_t> order(m);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<char> is_high(m, 0);
        for (std::size_t t = 0; t < high; ++t) is_high[order[t]] = 1;
        for (std::size_t e = 0; e < m; ++e) {
            const double lo = is_high[e] ? spec.cv_high_lo : spec.cv_low_lo;
            const double hi = is_high[e] ? spec.cv_high_hi : spec.cv_low_hi;
            specs[e].tag = WeightDistributionTag::with_cv(spec.dist, lo + (hi - lo) * unif(rng));
        }
    }
    g.graph = make_graph(n, specs);
    if (auto rep = validate(g.graph); !rep.ok()) throw ValidationError(rep.violations);

    Vector mu = Vector::Ones(n);
    std::set<int> prio;
    for (const auto& [r, c] : blocked)
        for (int k = 0; k < 4; ++k) {
            const int rr = r + dr[k], cc = c + dc[k];
            if (rr < 0 || cc < 0 || rr >= spec.rows || cc >= spec.cols) continue;
            const int u = index[rr * spec.cols + cc];
            if (u >= 0) prio.insert(u);
        }
    g.priority_nodes.assign(prio.begin(), prio.end());
    if (spec.target == TargetRule::obstacle_adjacent)
        for (int u : g.priority_nodes) mu(u) = spec.priority;
    g.mu = mu / mu.sum();
    return g;
}

// ---------------------------------------------------------------------------

struct PolicyStructure {
    std::vector<Edge> dominant_edges; // P(i,j) > threshold
    bool is_hamiltonian_cycle = false;
    double K_W = 0.0, sqrtV_W = 0.0, S = 0.0;
};

/// Dominant-edge extraction and a successor-following cycle check.
inline PolicyStructure analyze_policy(const Matrix& P, double threshold = 0.5) {
    const int n = static_cast<int>(P.rows());
    PolicyStructure s;
    std::vector<int> succ(n, -1);
    std::vector<int> count(n, 0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (P(i, j) > threshold) {
                s.dominant_edges.push_back({i, j});
                succ[i] = j;
                ++count[i];
            }
    if (n > 0 && std::all_of(count.begin(), count.end(), [](int c) { return c == 1; })) {
        std::vector<char> seen(n, 0);
        int v = 0, steps = 0;
        while (!seen[v]) {
            seen[v] = 1;
            v = succ[v];
            ++steps;
        }
        s.is_hamiltonian_cycle = v == 0 && steps == n;
    }
    return s;
}

inline PolicyStructure analyze_policy(const Matrix& P, const WeightedMarkovGraph& g, double threshold = 0.5) {
    auto s = analyze_policy(P, threshold);
    const auto score = score_policy(P, g);
    s.K_W = score.K_W;
    s.sqrtV_W = std::sqrt(std::max(score.V_W, 0.0));
    s.S = score.S;
    return s;
}

/// Pearson correlation between P(i,j) and cv(i,j) over the edges; NaN when
/// either side is constant.
inline double policy_cv_correlation(const Matrix& P, const WeightedMarkovGraph& g) {
    const std::size_t m = g.num_edges();
    if (m < 2) return std::nan("");
    double mp = 0, mc = 0;
    for (std::size_t e = 0; e < m; ++e) {
        mp += P(g.edges()[e].from, g.edges()[e].to);
        mc += g.tags()[e].cv;
    }
    mp /= m;
    mc /= m;
    double sp = 0, sc = 0, spc = 0;
    for (std::size_t e = 0; e < m; ++e) {
        const double dp = P(g.edges()[e].from, g.edges()[e].to) - mp;
        const double dc = g.tags()[e].cv - mc;
        sp += dp * dp;
        sc += dc * dc;
        spc += dp * dc;
    }
    if (sp == 0.0 || sc == 0.0) return std::nan("");
    return spc / std::sqrt(sp * sc);
}

// ---------------------------------------------------------------------------

enum class StudyMode { max_surprise, min_variance, baseline };

inline const char* to_string(StudyMode m) {
    switch (m) {
    case StudyMode::max_surprise: return "max-surprise";
    case StudyMode::min_variance: return "min-variance";
    case StudyMode::baseline: return "baseline";
    }
    return "?";
}

inline StudyMode parse_study_mode(const std::string& s) {
    if (s == "max-surprise") return StudyMode::max_surprise;
    if (s == "min-variance") return StudyMode::min_variance;
    if (s == "baseline") return StudyMode::baseline;
    throw ParseError("mode", "expected max-surprise, min-variance or baseline");
}

struct StudyRow {
    std::string policy;
    double K_W = 0.0, sqrtV_W = 0.0, S = 0.0;
    double gain = std::nan(""); // S / S_baseline - 1; NaN on the baseline row
};

struct StudyResult {
    StudyMode mode = StudyMode::baseline;
    Grid grid;
    PolicyFeasibleSet set;
    Matrix baseline_P;
    Matrix P;
    PolicyStructure structure;
    std::vector<TraceRow> trace;
    std::vector<StudyRow> rows; // baseline first
    double cv_correlation = std::nan("");
    std::string decomposition; // direction of K_W and sqrt(V_W) against baseline
};

/// Builds the instance, verifies feasibility, projects H to get the common
/// baseline, and runs the requested optimization from it.
inline StudyResult run_surveillance_study(const GridSpec& spec, const OptimizerConfig& cfg, StudyMode mode) {
    StudyResult r;
    r.mode = mode;
    r.grid = build_grid(spec);
    const auto& g = r.grid.graph;
    r.set = build_feasible_set(g, r.grid.mu, spec.eta, cfg);
    if (r.set.status != SetStatus::feasible)
        throw Error("surveillance instance is infeasible (phase-1 residual " + detail::fmt_num(r.set.residual) + ")");

    const Matrix H = uniform_mixing_matrix(g.n()).cwiseProduct(g.support_mask());
    const auto base = project_to_feasible(H, r.set, cfg);
    if (!base.converged) throw Error("baseline projection did not converge");
    r.baseline_P = base.P;
    auto row_of = [&](const std::string& name, const Matrix& P) {
        const auto s = analyze_policy(P, g);
        return StudyRow{name, s.K_W, s.sqrtV_W, s.S};
    };
    r.rows.push_back(row_of("baseline", r.baseline_P));

    SpsaResult opt;
    switch (mode) {
    case StudyMode::baseline:
        opt.P = r.baseline_P;
        opt.trace.push_back({0, r.rows[0].S, base.residual});
        break;
    case StudyMode::max_surprise: opt = maximize_surprise(g, r.set, cfg, r.baseline_P); break;
    case StudyMode::min_variance: opt = minimize_variance(g, r.set, cfg, r.baseline_P); break;
    }
    r.P = opt.P;
    r.trace = std::move(opt.trace);
    r.structure = analyze_policy(r.P, g);
    if (mode != StudyMode::baseline) {
        auto row = row_of(to_string(mode), r.P);
        row.gain = row.S / r.rows[0].S - 1.0;
        auto dir = [](double now, double was) { return now > was ? "increase" : now < was ? "decrease" : "unchanged"; };
        r.decomposition = std::string("K_W ") + dir(row.K_W, r.rows[0].K_W) + ", sqrtV_W " +
                          dir(row.sqrtV_W, r.rows[0].sqrtV_W);
        r.rows.push_back(row);
    }
    if (!g.all_deterministic()) r.cv_correlation = policy_cv_correlation(r.P, g);
    return r;
}

/// The canonical instances: a deterministic 4x4 grid and the stochastic 8x8
/// grid with two obstacle pairs and doubled coverage next to them.
inline GridSpec canonical_grid_4x4(std::uint64_t seed = 1) {
    GridSpec s;
    s.seed = seed;
    return s;
}

inline GridSpec canonical_grid_8x8(std::uint64_t seed = 1) {
    GridSpec s;
    s.rows = s.cols = 8;
    s.obstacles = {{2, 2}, {2, 3}, {5, 4}, {5, 5}};
    s.stochastic = true;
    s.target = TargetRule::obstacle_adjacent;
    s.seed = seed;
    return s;
}

} // namespace wmg
