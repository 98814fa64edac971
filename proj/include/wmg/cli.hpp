#pragma once

// Command implementations behind the `wmg` tool. Each command stages its
// outputs in memory and commits them together, so a failing command leaves
// no partial files behind.

#include "wmg/gradients.hpp"
#include "wmg/io.hpp"
#include "wmg/kemeny.hpp"
#include "wmg/surveillance.hpp"
#include "wmg/traffic.hpp"

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace wmg::cli {

namespace fs = std::filesystem;

enum ExitCode : int { exit_ok = 0, exit_invalid = 1, exit_io = 2 };

struct CommandResult {
    int exit_code = exit_ok;
    std::vector<fs::path> artifacts;
    double wall_seconds = 0.0;
    std::string message; // diagnostics for stderr when exit_code != 0
};

/// WMG_LOG in {error, info, debug}; anything else falls back to info.
inline void configure_logging() {
    auto logger = spdlog::stderr_color_mt("wmg");
    logger->set_pattern("%^[%l]%$ %v");
    spdlog::set_default_logger(logger);
    const char* env = std::getenv("WMG_LOG");
    const std::string level = env ? env : "info";
    if (level == "error") spdlog::set_level(spdlog::level::err);
    else if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else spdlog::set_level(spdlog::level::info);
}

/// Outputs of one command, written only when the whole set is ready.
class Artifacts {
  public:
    explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {}

    void add(const std::string& name, std::string contents) { files_.emplace_back(name, std::move(contents)); }

    // Every file goes to a temporary sibling first; renames happen only once
    // all temporaries are on disk.
    std::vector<fs::path> commit() const {
        std::vector<fs::path> tmps;
        auto cleanup = [&] {
            std::error_code ec;
            for (const auto& t : tmps) fs::remove(t, ec);
        };
        try {
            for (const auto& [name, body] : files_) {
                const fs::path target = dir_ / name;
                fs::create_directories(target.parent_path());
                fs::path tmp = target;
                tmp += ".tmp";
                std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
                if (!out) throw IoError("cannot write " + tmp.string());
                tmps.push_back(tmp);
                out << body;
                out.flush();
                if (!out) throw IoError("write failed for " + tmp.string());
            }
        } catch (const fs::filesystem_error& ex) {
            cleanup();
            throw IoError(ex.what());
        } catch (...) {
            cleanup();
            throw;
        }
        std::vector<fs::path> done;
        for (std::size_t k = 0; k < files_.size(); ++k) {
            const fs::path target = dir_ / files_[k].first;
            fs::rename(tmps[k], target);
            done.push_back(target);
        }
        return done;
    }

  private:
    fs::path dir_;
    std::vector<std::pair<std::string, std::string>> files_;
};

namespace detail {

// Shortest representation that round-trips, so reruns are byte-identical.
inline std::string num(double v) { return fmt::format("{}", v); }

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline json load_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open file");
    try {
        return json::parse(in);
    } catch (const json::parse_error& ex) {
        throw ParseError(path.string() + " byte " + std::to_string(ex.byte), ex.what());
    }
}

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

template <class F>
CommandResult run(const char* name, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    CommandResult r;
    try {
        r = body();
    } catch (const IoError& ex) {
        r.exit_code = exit_io;
        r.message = ex.what();
    } catch (const fs::filesystem_error& ex) {
        r.exit_code = exit_io;
        r.message = ex.what();
    } catch (const ValidationError& ex) {
        r.exit_code = exit_invalid;
        r.message = "graph validation failed:";
        for (const auto& v : ex.violations()) r.message += "\n  " + v;
    } catch (const std::exception& ex) {
        r.exit_code = exit_invalid;
        r.message = ex.what();
    }
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (r.exit_code == exit_ok) spdlog::info("{}: done in {:.2f}s, {} file(s)", name, r.wall_seconds, r.artifacts.size());
    return r;
}

} // namespace detail

// ---------------------------------------------------------------------------

/// moments.json (L, M, M2, V), kemeny.json (K, K_W, V, V_W, S, R) and
/// stationary.json (pi, pi_W).
inline CommandResult cmd_analyze(const fs::path& graph_file, const fs::path& out_dir) {
    return detail::run("analyze", [&] {
        const auto g = load_graph(graph_file);
        const auto a = analyze_chain(g);
        if (a.ill_conditioned) spdlog::warn("I - P + Pi is ill-conditioned (condition ~{:.3g})", a.cond);
        const auto m = passage_moments(a, g);
        const auto k = kemeny_constants(a, g.W(), m, g.num_edges());
        spdlog::debug("K={} K_W={} S={}", k.K, k.K_W, k.S);

        Artifacts out(out_dir);
        out.add("moments.json", detail::dump({{"n", g.n()},
                                              {"L", matrix_to_json(m.L)},
                                              {"M", matrix_to_json(m.M)},
                                              {"M2", matrix_to_json(m.M2)},
                                              {"V", matrix_to_json(m.V)}}));
        out.add("kemeny.json", detail::dump({{"K", k.K},
                                             {"K_W", k.K_W},
                                             {"V", k.V_scalar},
                                             {"V_W", k.V_W},
                                             {"S", k.S},
                                             {"R", k.R}}));
        out.add("stationary.json", detail::dump({{"pi", vector_to_json(a.pi)}, {"pi_w", vector_to_json(a.pi_w)}}));
        return CommandResult{exit_ok, out.commit(), 0.0, {}};
    });
}

inline constexpr double kGradientTolerance = 1e-4;

/// Finite-difference check of every derivative over every edge; gradients.csv
/// holds the worst relative error per quantity. Exit 1 if any exceeds 1e-4.
/// `corrupt` perturbs the analytic side and exists for negative controls.
inline CommandResult cmd_check_gradients(const fs::path& graph_file, double h, const fs::path& out_dir,
                                         double corrupt = 0.0) {
    return detail::run("check-gradients", [&] {
        const auto g = load_graph(graph_file);
        const int n = g.n();
        std::string csv = "quantity,parameter,directions,worst_rel_err,worst_direction,status\n";
        bool all_ok = true;
        for (Quantity q : all_quantities()) {
            std::vector<std::pair<Matrix, std::string>> dirs;
            if (is_P_quantity(q)) {
                // Move mass from each edge to the next out-edge of its row.
                for (const auto& [l, k] : g.edges()) {
                    int m = -1;
                    for (int t = 1; t < n && m < 0; ++t)
                        if (g.has_edge(l, (k + t) % n)) m = (k + t) % n;
                    if (m >= 0) dirs.emplace_back(swap_direction(n, l, k, m), fmt::format("{}->{}/{}->{}", l, k, l, m));
                }
            } else {
                for (const auto& [l, k] : g.edges()) dirs.emplace_back(edge_direction(n, l, k), fmt::format("{}->{}", l, k));
            }
            double worst = -1.0;
            std::string where;
            for (const auto& [d, label] : dirs) {
                double err = fd_verify(q, g, d, h, corrupt).rel_err;
                if (std::isnan(err)) err = std::numeric_limits<double>::infinity();
                if (err > worst) {
                    worst = err;
                    where = label;
                }
            }
            worst = std::max(worst, 0.0);
            const bool ok = worst <= kGradientTolerance;
            all_ok = all_ok && ok;
            csv += fmt::format("{},{},{},{},{},{}\n", to_string(q), is_P_quantity(q) ? "P" : "W", dirs.size(),
                               detail::num(worst), where, ok ? "pass" : "fail");
            spdlog::debug("{}: worst rel err {:.3g} over {} directions", to_string(q), worst, dirs.size());
        }
        Artifacts out(out_dir);
        out.add("gradients.csv", std::move(csv));
        CommandResult r{all_ok ? exit_ok : exit_invalid, out.commit(), 0.0, {}};
        if (!all_ok) r.message = fmt::format("gradient check failed: relative error above {}", kGradientTolerance);
        return r;
    });
}

// ---------------------------------------------------------------------------

/// Study file: {"grid": GridSpec, "optimizer": OptimizerConfig}; both keys
/// optional. Missing grid means the canonical 4x4 instance.
struct StudyFile {
    GridSpec grid;
    OptimizerConfig optimizer;
};

inline StudyFile parse_study_file(const json& j) {
    if (!j.is_object()) throw ParseError("study", "must be an object");
    StudyFile s;
    for (const auto& [key, v] : j.items()) {
        if (key == "grid") s.grid = v.get<GridSpec>();
        else if (key == "optimizer") s.optimizer = v.get<OptimizerConfig>();
        else throw ParseError("study." + key, "unknown key");
    }
    return s;
}

inline json policy_to_json(const StudyResult& r, const GridSpec& spec) {
    const auto& g = r.grid.graph;
    json edges = json::array();
    for (std::size_t k = 0; k < g.num_edges(); ++k) {
        const auto [i, j] = g.edges()[k];
        edges.push_back({{"from", i},
                         {"to", j},
                         {"p", r.P(i, j)},
                         {"w_mean", g.W()(i, j)},
                         {"w2", g.W2()(i, j)},
                         {"cv", g.tags()[k].cv},
                         {"dist", to_string(g.tags()[k].kind)}});
    }
    json dominant = json::array();
    for (const auto& [i, j] : r.structure.dominant_edges) dominant.push_back({i, j});
    json cells = json::array();
    for (const auto& [row, col] : r.grid.cells) cells.push_back({row, col});
    return {{"mode", to_string(r.mode)},
            {"n", g.n()},
            {"eta", spec.eta},
            {"seed", spec.seed},
            {"cells", cells},
            {"mu", vector_to_json(r.grid.mu)},
            {"P", matrix_to_json(r.P)},
            {"edges", edges},
            {"K_W", r.structure.K_W},
            {"sqrtV_W", r.structure.sqrtV_W},
            {"S", r.structure.S},
            {"dominant_edges", dominant},
            {"is_hamiltonian_cycle", r.structure.is_hamiltonian_cycle},
            {"cv_correlation", detail::number_or_null(r.cv_correlation)},
            {"decomposition", r.decomposition}};
}

/// Surveillance study; writes study_summary.csv, policy_<mode>.json and
/// trace_<mode>.csv. `seed` replaces both the grid and the optimizer seed.
inline CommandResult cmd_surveil(const fs::path& spec_file, const std::string& mode_name,
                                 std::optional<std::uint64_t> seed, const fs::path& out_dir) {
    return detail::run("surveil", [&] {
        const StudyMode mode = parse_study_mode(mode_name);
        StudyFile sf = parse_study_file(detail::load_json_file(spec_file));
        if (seed) sf.grid.seed = sf.optimizer.seed = *seed;
        spdlog::info("surveil: {}x{} grid, mode {}, {} iterations", sf.grid.rows, sf.grid.cols, mode_name,
                     sf.optimizer.iterations);
        const auto r = run_surveillance_study(sf.grid, sf.optimizer, mode);

        // Re-validate the emitted policy before anything is written.
        const auto& g = r.grid.graph;
        const double occ = (r.grid.mu.transpose() * r.P - r.grid.mu.transpose()).cwiseAbs().maxCoeff();
        const double rows = (r.P.rowwise().sum() - Vector::Ones(g.n())).cwiseAbs().maxCoeff();
        if (occ > 1e-8 || rows > 1e-8) throw Error(fmt::format("emitted policy violates mu P = mu ({:.3g}) or rows ({:.3g})", occ, rows));
        for (const auto& [i, j] : g.edges())
            if (r.P(i, j) < sf.grid.eta - 1e-12) throw Error(fmt::format("emitted policy has P({},{}) below eta", i, j));

        std::string summary = "policy,K_W,sqrtV_W,S,gain\n";
        for (const auto& row : r.rows)
            summary += fmt::format("{},{},{},{},{}\n", row.policy, detail::num(row.K_W), detail::num(row.sqrtV_W),
                                   detail::num(row.S), row.policy == "baseline" ? "" : detail::num(row.gain));
        std::string trace = "iter,objective,residual\n";
        for (const auto& t : r.trace)
            trace += fmt::format("{},{},{}\n", t.iter, detail::num(t.objective), detail::num(t.residual));

        if (r.rows.size() > 1) spdlog::info("surveil: S {:.4g} -> {:.4g} (gain {:+.1f}%)", r.rows[0].S, r.rows[1].S, 100 * r.rows[1].gain);
        Artifacts out(out_dir);
        out.add("study_summary.csv", std::move(summary));
        out.add(fmt::format("policy_{}.json", mode_name), detail::dump(policy_to_json(r, sf.grid)));
        out.add(fmt::format("trace_{}.csv", mode_name), std::move(trace));
        return CommandResult{exit_ok, out.commit(), 0.0, {}};
    });
}

// ---------------------------------------------------------------------------

/// Cascade study over seeds base, base+1, ... for the chosen policies ("all"
/// runs the three). Writes cascade_runs.csv, cascade_summary.csv and one
/// instance file per seed under instances/.
inline CommandResult cmd_cascade(const fs::path& config_file, const std::string& policy, std::uint64_t seed,
                                 int seeds, int jobs, const fs::path& out_dir) {
    return detail::run("cascade", [&] {
        const auto cfg = detail::load_json_file(config_file).get<CascadeConfig>();
        if (seeds < 1) throw Error("--seeds must be at least 1");
        std::vector<PolicyKind> policies;
        if (policy == "all")
            policies = {PolicyKind::supervised, PolicyKind::unsupervised, PolicyKind::locally_supervised};
        else
            policies = {parse_policy_kind(policy)};
        std::vector<std::uint64_t> seed_list;
        for (int k = 0; k < seeds; ++k) seed_list.push_back(seed + static_cast<std::uint64_t>(k));
        spdlog::info("cascade: {} seed(s) x {} polic{} on {} job(s)", seeds, policies.size(),
                     policies.size() == 1 ? "y" : "ies", jobs);
        const auto st = run_cascade_study(cfg, policies, seed_list, jobs);

        std::string runs = "seed,step,policy,status,dK,dV,max_dpi_dest\n";
        for (std::size_t s = 0; s < seed_list.size(); ++s)
            for (std::size_t p = 0; p < policies.size(); ++p) {
                const auto& run = st.runs[p][s];
                for (const auto& step : run.steps)
                    runs += fmt::format("{},{},{},feasible,{},{},{}\n", run.seed, step.step, to_string(run.policy),
                                        detail::num(step.dK), detail::num(step.dV), detail::num(step.max_dpi_dest));
                runs += fmt::format("{},{},{},{},,,\n", run.seed, run.steps.size() + 1, to_string(run.policy),
                                    to_string(run.reason));
            }

        std::string header = "metric";
        for (auto p : policies) header += std::string(",") + to_string(p);
        std::string summary = header + "\n";
        auto row = [&](const char* name, auto field) {
            summary += name;
            for (const auto& s : st.summary) summary += "," + field(s);
            summary += "\n";
        };
        row("runs", [](const CascadeSummary& s) { return std::to_string(s.runs); });
        row("successful_runs", [](const CascadeSummary& s) { return std::to_string(s.successful_runs); });
        row("mean_dK", [](const CascadeSummary& s) { return detail::num(s.mean_dK); });
        row("mean_dV", [](const CascadeSummary& s) { return detail::num(s.mean_dV); });
        row("mean_dpi", [](const CascadeSummary& s) { return detail::num(s.mean_dpi); });
        row("max_dpi_dest", [](const CascadeSummary& s) { return detail::num(s.max_dpi_dest); });
        row("mean_steps", [](const CascadeSummary& s) { return detail::num(s.mean_steps); });
        for (const auto& s : st.summary)
            spdlog::info("cascade: {:<18} success {}/{} mean dK {:.3f}", to_string(s.policy), s.successful_runs, s.runs,
                         s.mean_dK);

        Artifacts out(out_dir);
        out.add("cascade_runs.csv", std::move(runs));
        out.add("cascade_summary.csv", std::move(summary));
        for (auto s : seed_list) {
            const auto g = gen_geometric_graph(cfg.n, cfg.degree, s, cfg.w_lo, cfg.w_hi);
            out.add(fmt::format("instances/instance_{}.json", s), detail::dump(graph_to_json(g, std::nullopt, cfg.destinations)));
        }
        return CommandResult{exit_ok, out.commit(), 0.0, {}};
    });
}

} // namespace wmg::cli
