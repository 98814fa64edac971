#pragma once

#include "wmg/chain.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace wmg {

/// Mean, second moment and variance matrices of weighted first-passage times.
struct PassageMoments {
    Matrix L;  // mean first-passage lengths (unit weights)
    Matrix M;  // mean weighted first-passage times
    Matrix M2; // second moments
    Matrix V;  // variances, M2 - M o M
};

namespace detail {

// I - Z + 1 1^T [Z]_dg
inline Matrix kemeny_snell_core(const Matrix& Z) {
    const Eigen::Index n = Z.rows();
    return Matrix::Identity(n, n) - Z + ones_dg(Z);
}

inline Vector inv_pi(const Vector& pi) { return pi.cwiseInverse(); }

} // namespace detail

/// L = (I - Z + 1 1^T [Z]_dg) Xi^-1 with Xi = dg(pi).
inline Matrix mean_passage_lengths(const ChainAnalysis& a) {
    return detail::kemeny_snell_core(a.Z) * detail::inv_pi(a.pi).asDiagonal();
}

/// Closed form for the mean weighted first-passage matrix:
/// M = (Z (P o W) Pi - 1 1^T [Z (P o W) Pi]_dg + C (I - Z + 1 1^T [Z]_dg)) Xi^-1,
/// C = pi (P o W) 1. Linear in W for fixed P.
inline Matrix weighted_mean_passage(const ChainAnalysis& a, const Matrix& W) {
    const Matrix PW = a.P.cwiseProduct(W);
    const double C = a.pi.dot(PW.rowwise().sum());
    const Matrix T = a.Z * PW * a.Pi;
    const Matrix F = T - detail::ones_dg(T) + C * detail::kemeny_snell_core(a.Z);
    return F * detail::inv_pi(a.pi).asDiagonal();
}

inline Matrix weighted_mean_passage(const ChainAnalysis& a, const WeightedMarkovGraph& g) {
    return weighted_mean_passage(a, g.W());
}

/// [M]_dg from its own identity, pi (P o W) 1 / pi(i).
inline Vector mean_return_weights(const ChainAnalysis& a, const Matrix& W) {
    const double C = a.pi.dot(a.P.cwiseProduct(W).rowwise().sum());
    return C * detail::inv_pi(a.pi);
}

/// Diagonal of the second-moment matrix:
/// M2(i,i) = [pi (P o W2) 1 + 2 (pi (P o W)(M - [M]_dg))(i)] / pi(i).
inline Vector second_moment_diagonal(const ChainAnalysis& a, const Matrix& W, const Matrix& W2,
                                     const Matrix& M) {
    const double c2 = a.pi.dot(a.P.cwiseProduct(W2).rowwise().sum());
    const Matrix off = M - detail::dg_part(M);
    const RowVector t = a.pi.transpose() * a.P.cwiseProduct(W) * off;
    return ((c2 + 2.0 * t.array()).transpose() / a.pi.array()).matrix();
}

/// Second moments of weighted first-passage times (weights re-drawn i.i.d. on
/// every traversal).
inline Matrix weighted_second_moment(const ChainAnalysis& a, const Matrix& W, const Matrix& W2,
                                     const Matrix& M) {
    const Eigen::Index n = a.P.rows();
    const Vector ones = Vector::Ones(n);
    const Matrix PW = a.P.cwiseProduct(W);
    const Matrix PW2 = a.P.cwiseProduct(W2);
    const Matrix first = a.Z * PW2.rowwise().sum() * ones.transpose();
    const Matrix mixed = a.Z * PW * (M - detail::dg_part(M));
    const Vector d2 = second_moment_diagonal(a, W, W2, M);
    return first - detail::ones_dg(first) + 2.0 * (mixed - detail::ones_dg(mixed)) +
           detail::kemeny_snell_core(a.Z) * d2.asDiagonal();
}

inline Matrix weighted_second_moment(const ChainAnalysis& a, const WeightedMarkovGraph& g,
                                     const Matrix& M) {
    return weighted_second_moment(a, g.W(), g.W2(), M);
}

// Negative variances from cancellation are zeroed when no larger than this
// fraction of the second moment (with an absolute floor).
inline constexpr double kVarianceClamp = 1e-8;

/// V = M2 - M o M with small negative noise clamped to 0.
inline Matrix passage_variance(const Matrix& M, const Matrix& M2) {
    if (M.rows() != M2.rows() || M.cols() != M2.cols()) throw Error("passage_variance: shape mismatch");
    Matrix V = M2 - M.cwiseProduct(M);
    for (Eigen::Index i = 0; i < V.rows(); ++i) {
        for (Eigen::Index j = 0; j < V.cols(); ++j) {
            if (V(i, j) < 0.0) {
                if (V(i, j) >= -kVarianceClamp * std::max(1.0, std::abs(M2(i, j)))) {
                    V(i, j) = 0.0;
                } else {
                    throw Error("negative passage variance " + std::to_string(V(i, j)) + " at (" +
                                std::to_string(i) + "," + std::to_string(j) + ")");
                }
            }
        }
    }
    return V;
}

inline PassageMoments passage_moments(const ChainAnalysis& a, const Matrix& W, const Matrix& W2) {
    PassageMoments m;
    m.L = mean_passage_lengths(a);
    m.M = weighted_mean_passage(a, W);
    m.M2 = weighted_second_moment(a, W, W2, m.M);
    m.V = passage_variance(m.M, m.M2);
    return m;
}

inline PassageMoments passage_moments(const ChainAnalysis& a, const WeightedMarkovGraph& g) {
    return passage_moments(a, g.W(), g.W2());
}

// ---------------------------------------------------------------------------
// Oracles

/// Column j of M and M2 from the taboo kernel jP (P with column j zeroed):
/// (I - jP) m = (P o W) 1 and (I - jP) s = (P o W2) 1 + 2 (P o W) m_{-j}.
struct TabooColumn {
    Vector mean;
    Vector second_moment;
};

inline TabooColumn taboo_oracle(const Matrix& P, const Matrix& W, const Matrix& W2, int j) {
    const Eigen::Index n = P.rows();
    if (j < 0 || j >= n) throw Error("taboo_oracle: target out of range");
    Matrix taboo = P;
    taboo.col(j).setZero();
    const Matrix A = Matrix::Identity(n, n) - taboo;
    Eigen::PartialPivLU<Matrix> lu(A);
    const double rcond = lu.rcond();
    if (!(rcond > 1e-15)) {
        throw SingularSystemError("I - jP is singular; chain is reducible", rcond > 0 ? 1.0 / rcond : INFINITY);
    }
    TabooColumn out;
    out.mean = lu.solve(P.cwiseProduct(W).rowwise().sum());
    Vector m_off = out.mean;
    m_off(j) = 0.0;
    Vector rhs = P.cwiseProduct(W2).rowwise().sum() + 2.0 * P.cwiseProduct(W) * m_off;
    out.second_moment = lu.solve(rhs);
    return out;
}

inline TabooColumn taboo_oracle(const WeightedMarkovGraph& g, int j) {
    return taboo_oracle(g.P(), g.W(), g.W2(), j);
}

/// Full matrices assembled column-by-column from the taboo oracle.
inline PassageMoments taboo_moments(const WeightedMarkovGraph& g) {
    const int n = g.n();
    PassageMoments m;
    m.M.resize(n, n);
    m.M2.resize(n, n);
    m.L.resize(n, n);
    const Matrix ones = g.support_mask();
    for (int j = 0; j < n; ++j) {
        auto col = taboo_oracle(g, j);
        m.M.col(j) = col.mean;
        m.M2.col(j) = col.second_moment;
        m.L.col(j) = taboo_oracle(g.P(), ones, ones, j).mean;
    }
    m.V = m.M2 - m.M.cwiseProduct(m.M);
    return m;
}

/// Path-sum oracle for M(:, j): sums weight x probability over first-passage
/// paths grouped by length, stopping once the surviving (not yet absorbed)
/// probability mass drops below `tail`.
struct PathSumResult {
    Vector mean;
    int max_length = 0;
    double residual_mass = 0.0;
};

inline PathSumResult path_sum_oracle(const Matrix& P, const Matrix& W, int j, double tail = 1e-13,
                                     int max_length = 10'000'000) {
    const Eigen::Index n = P.rows();
    PathSumResult r;
    r.mean = Vector::Zero(n);
    const Matrix PW = P.cwiseProduct(W);
    // For each start i: mass(i, s) = Pr[at s after l steps, j not yet hit],
    // acc(i, s) = E[accumulated weight; same event].
    Matrix mass = Matrix::Identity(n, n);
    Matrix acc = Matrix::Zero(n, n);
    for (int len = 1; len <= max_length; ++len) {
        Matrix next_mass = mass * P;
        Matrix next_acc = acc * P + mass * PW;
        r.mean += next_acc.col(j);
        next_mass.col(j).setZero();
        next_acc.col(j).setZero();
        mass.swap(next_mass);
        acc.swap(next_acc);
        r.max_length = len;
        r.residual_mass = mass.rowwise().sum().maxCoeff();
        if (r.residual_mass < tail) break;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Monte Carlo

struct MonteCarloEstimate {
    double mean = 0.0;
    double variance = 0.0;
    double se_mean = 0.0;
    double se_variance = 0.0;
    std::uint64_t episodes = 0;
};

// Safety cap on steps per episode.
inline constexpr std::uint64_t kMaxEpisodeSteps = 1'000'000'000ULL;

namespace detail {

class WeightSampler {
  public:
    explicit WeightSampler(const WeightedMarkovGraph& g) : n_(g.n()) {
        params_.assign(static_cast<std::size_t>(n_) * n_, {});
        for (std::size_t k = 0; k < g.num_edges(); ++k) {
            const auto [i, j] = g.edges()[k];
            const auto& t = g.tags()[k];
            Param p;
            p.kind = t.kind;
            p.mean = g.W()(i, j);
            if (t.kind == WeightKind::lognormal) {
                const double s2 = std::log1p(t.cv * t.cv);
                p.a = std::log(p.mean) - 0.5 * s2;
                p.b = std::sqrt(s2);
            } else if (t.kind == WeightKind::gamma) {
                p.a = 1.0 / (t.cv * t.cv);     // shape
                p.b = p.mean * t.cv * t.cv;    // scale
            }
            params_[static_cast<std::size_t>(i) * n_ + j] = p;
        }
    }

    template <class Rng>
    double sample(int i, int j, Rng& rng) const {
        const Param& p = params_[static_cast<std::size_t>(i) * n_ + j];
        switch (p.kind) {
        case WeightKind::deterministic: return p.mean;
        case WeightKind::lognormal: return std::lognormal_distribution<double>(p.a, p.b)(rng);
        case WeightKind::gamma: return std::gamma_distribution<double>(p.a, p.b)(rng);
        }
        return p.mean;
    }

  private:
    struct Param {
        WeightKind kind = WeightKind::deterministic;
        double mean = 0.0, a = 0.0, b = 0.0;
    };
    int n_;
    std::vector<Param> params_;
};

} // namespace detail

/// Simulates `episodes` first passages i -> j, re-drawing every traversed
/// edge weight from its tag's law. Episodes are split into `streams`
/// independently seeded blocks (seed, stream); the result depends only on
/// (seed, streams).
inline MonteCarloEstimate monte_carlo_passage(const WeightedMarkovGraph& g, int i, int j,
                                              std::uint64_t episodes, std::uint64_t seed,
                                              unsigned streams = 1) {
    if (episodes < 1) throw Error("monte_carlo_passage: episodes must be >= 1");
    if (streams < 1) streams = 1;
    const int n = g.n();
    if (i < 0 || j < 0 || i >= n || j >= n) throw Error("monte_carlo_passage: node out of range");

    // Row-wise cumulative tables over out-edges.
    std::vector<std::vector<int>> targets(n);
    std::vector<std::vector<double>> cdf(n);
    for (const auto& e : g.edges()) {
        targets[e.from].push_back(e.to);
        const double prev = cdf[e.from].empty() ? 0.0 : cdf[e.from].back();
        cdf[e.from].push_back(prev + g.P()(e.from, e.to));
    }
    const detail::WeightSampler sampler(g);

    // Welford accumulation per stream, merged in stream order.
    double count = 0, mean = 0, m2 = 0, m3 = 0, m4 = 0;
    std::vector<double> samples;
    samples.reserve(episodes);
    for (unsigned s = 0; s < streams; ++s) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(s)};
        std::mt19937_64 rng(seq);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const std::uint64_t block = episodes / streams + (s < episodes % streams ? 1 : 0);
        for (std::uint64_t e = 0; e < block; ++e) {
            int x = i;
            double total = 0.0;
            std::uint64_t steps = 0;
            do {
                const auto& c = cdf[x];
                const double u = unif(rng) * c.back();
                std::size_t k = std::upper_bound(c.begin(), c.end(), u) - c.begin();
                if (k >= c.size()) k = c.size() - 1;
                const int y = targets[x][k];
                total += sampler.sample(x, y, rng);
                x = y;
                if (++steps > kMaxEpisodeSteps)
                    throw Error("monte_carlo_passage: episode exceeded the step cap");
            } while (x != j);
            samples.push_back(total);
        }
    }
    for (double v : samples) {
        count += 1;
        const double d = v - mean;
        mean += d / count;
    }
    for (double v : samples) {
        const double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    (void)m3;
    MonteCarloEstimate est;
    est.episodes = episodes;
    est.mean = mean;
    const double N = count;
    est.variance = N > 1 ? m2 / (N - 1) : 0.0;
    est.se_mean = std::sqrt(est.variance / N);
    const double mu2 = m2 / N, mu4 = m4 / N;
    const double var_of_var = N > 3 ? (mu4 - mu2 * mu2 * (N - 3) / (N - 1)) / N : 0.0;
    est.se_variance = std::sqrt(std::max(var_of_var, 0.0));
    return est;
}

} // namespace wmg
