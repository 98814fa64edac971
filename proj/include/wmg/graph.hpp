#pragma once

#include "wmg/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace wmg {

enum class WeightKind { deterministic, lognormal, gamma };

inline const char* to_string(WeightKind k) {
    switch (k) {
    case WeightKind::deterministic: return "deterministic";
    case WeightKind::lognormal: return "lognormal";
    case WeightKind::gamma: return "gamma";
    }
    return "?";
}

// Sampling law of a single edge weight, parameterized by its coefficient of
// variation. Second moment is always W^2 (1 + cv^2).
struct WeightDistributionTag {
    WeightKind kind = WeightKind::deterministic;
    double cv = 0.0;

    static WeightDistributionTag deterministic() { return {}; }

    static WeightDistributionTag with_cv(WeightKind kind, double cv) {
        WeightDistributionTag t{kind, cv};
        if (auto err = t.check()) {
            throw Error(*err);
        }
        return t;
    }

    bool is_deterministic() const { return kind == WeightKind::deterministic; }

    double second_moment_factor() const { return 1.0 + cv * cv; }

    std::optional<std::string> check() const {
        if (kind == WeightKind::deterministic && cv != 0.0) {
            return "deterministic weight tag requires cv = 0";
        }
        if (kind != WeightKind::deterministic && !(cv > 0.0)) {
            return std::string(to_string(kind)) + " weight tag requires cv > 0";
        }
        return std::nullopt;
    }

    friend bool operator==(const WeightDistributionTag&, const WeightDistributionTag&) = default;
};

// Smallest admissible mean weight on an edge.
inline constexpr double kWeightFloor = 1e-9;
inline constexpr double kRowSumTolerance = 1e-12;

/// Directed graph carrying a transition matrix P, mean edge weights W and
/// second moments W2 = E[W^2]. Immutable; the `with_*` members return
/// modified copies.
class WeightedMarkovGraph {
  public:
    WeightedMarkovGraph() = default;

    WeightedMarkovGraph(std::vector<Edge> edges, Matrix P, Matrix W, Matrix W2,
                        std::vector<WeightDistributionTag> tags)
        : edges_(std::move(edges)), P_(std::move(P)), W_(std::move(W)), W2_(std::move(W2)),
          tags_(std::move(tags)) {
        if (P_.rows() != P_.cols() || W_.rows() != P_.rows() || W_.cols() != P_.cols() ||
            W2_.rows() != P_.rows() || W2_.cols() != P_.cols()) {
            throw Error("P, W and W2 must be square matrices of equal size");
        }
        if (tags_.size() != edges_.size()) {
            throw Error("one weight tag per edge required");
        }
        for (const auto& e : edges_) {
            if (e.from < 0 || e.to < 0 || e.from >= n() || e.to >= n()) {
                throw Error("edge (" + std::to_string(e.from) + "," + std::to_string(e.to) +
                            ") out of range");
            }
        }
        std::vector<std::size_t> order(edges_.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return edges_[a] < edges_[b]; });
        std::vector<Edge> e2;
        std::vector<WeightDistributionTag> t2;
        for (auto i : order) {
            if (!e2.empty() && e2.back() == edges_[i]) {
                throw Error("duplicate edge (" + std::to_string(edges_[i].from) + "," +
                            std::to_string(edges_[i].to) + ")");
            }
            e2.push_back(edges_[i]);
            t2.push_back(tags_[i]);
        }
        edges_ = std::move(e2);
        tags_ = std::move(t2);
    }

    int n() const { return static_cast<int>(P_.rows()); }
    const std::vector<Edge>& edges() const { return edges_; }
    std::size_t num_edges() const { return edges_.size(); }
    const Matrix& P() const { return P_; }
    const Matrix& W() const { return W_; }
    const Matrix& W2() const { return W2_; }
    const std::vector<WeightDistributionTag>& tags() const { return tags_; }

    std::optional<std::size_t> edge_index(int from, int to) const {
        Edge key{from, to};
        auto it = std::lower_bound(edges_.begin(), edges_.end(), key);
        if (it == edges_.end() || !(*it == key)) return std::nullopt;
        return static_cast<std::size_t>(it - edges_.begin());
    }

    bool has_edge(int from, int to) const { return edge_index(from, to).has_value(); }

    const WeightDistributionTag& tag(int from, int to) const {
        auto idx = edge_index(from, to);
        if (!idx) throw Error("no such edge");
        return tags_[*idx];
    }

    bool all_deterministic() const {
        return std::all_of(tags_.begin(), tags_.end(),
                           [](const auto& t) { return t.is_deterministic(); });
    }

    Matrix support_mask() const {
        Matrix m = Matrix::Zero(n(), n());
        for (const auto& e : edges_) m(e.from, e.to) = 1.0;
        return m;
    }

    std::vector<int> out_degree() const {
        std::vector<int> d(n(), 0);
        for (const auto& e : edges_) ++d[e.from];
        return d;
    }

    // Same edges and weights, new transition probabilities. Edges whose
    // probability becomes zero are dropped together with their weights.
    WeightedMarkovGraph with_transition(const Matrix& P) const {
        if (P.rows() != n() || P.cols() != n()) throw Error("transition matrix size mismatch");
        std::vector<Edge> e;
        std::vector<WeightDistributionTag> t;
        Matrix W = Matrix::Zero(n(), n());
        Matrix W2 = Matrix::Zero(n(), n());
        Matrix Pn = Matrix::Zero(n(), n());
        for (std::size_t k = 0; k < edges_.size(); ++k) {
            const auto [i, j] = edges_[k];
            if (P(i, j) > 0.0) {
                e.push_back(edges_[k]);
                t.push_back(tags_[k]);
                W(i, j) = W_(i, j);
                W2(i, j) = W2_(i, j);
                Pn(i, j) = P(i, j);
            }
        }
        for (Eigen::Index i = 0; i < P.rows(); ++i)
            for (Eigen::Index j = 0; j < P.cols(); ++j)
                if (P(i, j) != 0.0 && !has_edge(static_cast<int>(i), static_cast<int>(j)))
                    throw Error("transition matrix has mass outside the edge set");
        return WeightedMarkovGraph(std::move(e), std::move(Pn), std::move(W), std::move(W2),
                                   std::move(t));
    }

    // New mean weights; second moments follow each edge's fixed-cv law,
    // W2 = W^2 (1 + cv^2), with cv implied by the current (W, W2) pair.
    WeightedMarkovGraph with_weights(const Matrix& W) const {
        if (W.rows() != n() || W.cols() != n()) throw Error("weight matrix size mismatch");
        Matrix Wn = Matrix::Zero(n(), n());
        Matrix W2n = Matrix::Zero(n(), n());
        for (const auto& [i, j] : edges_) {
            Wn(i, j) = W(i, j);
            const double ratio = W2_(i, j) / (W_(i, j) * W_(i, j));
            W2n(i, j) = W(i, j) * W(i, j) * ratio;
        }
        return WeightedMarkovGraph(edges_, P_, std::move(Wn), std::move(W2n), tags_);
    }

    // Explicit override of the second moments (used by finite-difference
    // checks that perturb W along a fixed W2 law).
    WeightedMarkovGraph with_moments(const Matrix& W, const Matrix& W2) const {
        return WeightedMarkovGraph(edges_, P_, W, W2, tags_);
    }

  private:
    std::vector<Edge> edges_;
    Matrix P_;
    Matrix W_;
    Matrix W2_;
    std::vector<WeightDistributionTag> tags_;
};

struct EdgeSpec {
    int from = 0;
    int to = 0;
    double p = 0.0;
    double w_mean = 0.0;
    WeightDistributionTag tag{};
    std::optional<double> w2{}; // explicit second moment; derived from tag when absent
};

// Builds a graph from an edge list. W2 comes from each edge's tag unless an
// explicit second moment is given.
inline WeightedMarkovGraph make_graph(int n, std::span<const EdgeSpec> specs) {
    if (n < 1) throw Error("graph needs at least one node");
    Matrix P = Matrix::Zero(n, n), W = Matrix::Zero(n, n), W2 = Matrix::Zero(n, n);
    std::vector<Edge> edges;
    std::vector<WeightDistributionTag> tags;
    for (const auto& s : specs) {
        if (s.from < 0 || s.to < 0 || s.from >= n || s.to >= n) {
            throw Error("edge (" + std::to_string(s.from) + "," + std::to_string(s.to) +
                        ") out of range");
        }
        edges.push_back({s.from, s.to});
        tags.push_back(s.tag);
        P(s.from, s.to) = s.p;
        W(s.from, s.to) = s.w_mean;
        W2(s.from, s.to) = s.w2 ? *s.w2 : s.w_mean * s.w_mean * s.tag.second_moment_factor();
    }
    return WeightedMarkovGraph(std::move(edges), std::move(P), std::move(W), std::move(W2),
                               std::move(tags));
}

// Deterministic-weight graph on the support of P.
inline WeightedMarkovGraph make_graph(const Matrix& P, const Matrix& W) {
    std::vector<EdgeSpec> specs;
    for (Eigen::Index i = 0; i < P.rows(); ++i)
        for (Eigen::Index j = 0; j < P.cols(); ++j)
            if (P(i, j) > 0.0)
                specs.push_back({static_cast<int>(i), static_cast<int>(j), P(i, j), W(i, j)});
    return make_graph(static_cast<int>(P.rows()), specs);
}

/// Number of strongly connected components of the directed graph given by
/// adjacency lists (iterative Tarjan).
inline int count_strong_components(const std::vector<std::vector<int>>& adj) {
    const int n = static_cast<int>(adj.size());
    std::vector<int> index(n, -1), low(n, 0);
    std::vector<char> on_stack(n, 0);
    std::vector<int> stack;
    int counter = 0, components = 0;
    struct Frame {
        int v;
        std::size_t next;
    };
    std::vector<Frame> call;
    for (int root = 0; root < n; ++root) {
        if (index[root] >= 0) continue;
        call.push_back({root, 0});
        index[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = 1;
        while (!call.empty()) {
            auto& f = call.back();
            if (f.next < adj[f.v].size()) {
                const int w = adj[f.v][f.next++];
                if (index[w] < 0) {
                    index[w] = low[w] = counter++;
                    stack.push_back(w);
                    on_stack[w] = 1;
                    call.push_back({w, 0});
                } else if (on_stack[w]) {
                    low[f.v] = std::min(low[f.v], index[w]);
                }
                continue;
            }
            const int v = f.v;
            call.pop_back();
            if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
            if (low[v] == index[v]) {
                ++components;
                int w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = 0;
                } while (w != v);
            }
        }
    }
    return components;
}

inline std::vector<std::vector<int>> adjacency_of(const Matrix& support) {
    std::vector<std::vector<int>> adj(support.rows());
    for (Eigen::Index i = 0; i < support.rows(); ++i)
        for (Eigen::Index j = 0; j < support.cols(); ++j)
            if (support(i, j) > 0.0) adj[i].push_back(static_cast<int>(j));
    return adj;
}

inline bool strongly_connected(const Matrix& support) {
    return support.rows() > 0 && count_strong_components(adjacency_of(support)) == 1;
}

// First (from, to) pair such that `to` cannot be reached from `from`.
inline std::optional<std::pair<int, int>> find_unreachable_pair(const Matrix& support) {
    const auto adj = adjacency_of(support);
    const int n = static_cast<int>(adj.size());
    for (int s = 0; s < n; ++s) {
        std::vector<char> seen(n, 0);
        std::vector<int> todo{s};
        seen[s] = 1;
        while (!todo.empty()) {
            int v = todo.back();
            todo.pop_back();
            for (int w : adj[v])
                if (!seen[w]) {
                    seen[w] = 1;
                    todo.push_back(w);
                }
        }
        for (int t = 0; t < n; ++t)
            if (!seen[t]) return std::pair{s, t};
    }
    return std::nullopt;
}

struct ValidationReport {
    std::vector<std::string> violations;

    bool ok() const { return violations.empty(); }
};

namespace detail {
inline std::string fmt_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.15g", v);
    return buf;
}
} // namespace detail

/// Checks row-stochasticity, support agreement of P/W/W2, W2 >= W^2,
/// weight floor, tag consistency and strong connectivity. Never throws.
inline ValidationReport validate(const WeightedMarkovGraph& g) {
    ValidationReport r;
    const int n = g.n();
    const Matrix& P = g.P();
    const Matrix& W = g.W();
    const Matrix& W2 = g.W2();
    const Matrix mask = g.support_mask();
    using detail::fmt_num;

    for (int i = 0; i < n; ++i) {
        const double s = P.row(i).sum();
        if (std::abs(s - 1.0) > kRowSumTolerance) {
            r.violations.push_back("row " + std::to_string(i) + " sums to " + fmt_num(s));
        }
    }
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const bool edge = mask(i, j) > 0.0;
            const std::string at = "(" + std::to_string(i) + "," + std::to_string(j) + ")";
            if (edge) {
                if (!(P(i, j) > 0.0))
                    r.violations.push_back("edge " + at + " has non-positive probability " +
                                           fmt_num(P(i, j)));
                if (!(W(i, j) >= kWeightFloor))
                    r.violations.push_back("edge " + at + " has weight " + fmt_num(W(i, j)) +
                                           " below floor");
                if (!(W2(i, j) > 0.0))
                    r.violations.push_back("edge " + at + " has non-positive second moment");
                else if (W2(i, j) < W(i, j) * W(i, j) * (1.0 - 1e-12))
                    r.violations.push_back("edge " + at + " second moment " + fmt_num(W2(i, j)) +
                                           " below squared mean " + fmt_num(W(i, j) * W(i, j)));
            } else {
                if (P(i, j) != 0.0)
                    r.violations.push_back("probability at " + at + " outside the edge set");
                if (W(i, j) != 0.0)
                    r.violations.push_back("weight at " + at + " outside the edge set");
                if (W2(i, j) != 0.0)
                    r.violations.push_back("second moment at " + at + " outside the edge set");
            }
        }
    }
    for (std::size_t k = 0; k < g.num_edges(); ++k) {
        if (auto err = g.tags()[k].check()) {
            const auto& e = g.edges()[k];
            r.violations.push_back("edge (" + std::to_string(e.from) + "," +
                                   std::to_string(e.to) + "): " + *err);
        }
    }
    if (n > 0) {
        const int scc = count_strong_components(adjacency_of(mask));
        if (scc != 1) {
            r.violations.push_back("1 strongly connected component required, found " +
                                   std::to_string(scc));
        }
    }
    return r;
}

/// n x n matrix with every entry 1/n.
inline Matrix uniform_mixing_matrix(int n) {
    if (n < 1) throw Error("uniform_mixing_matrix needs n >= 1");
    return Matrix::Constant(n, n, 1.0 / n);
}

} // namespace wmg
