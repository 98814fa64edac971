#include "wmg/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

int finish(const wmg::cli::CommandResult& r) {
    if (r.exit_code != wmg::cli::exit_ok) std::cerr << "error: " << r.message << "\n";
    return r.exit_code;
}

} // namespace

int main(int argc, char** argv) {
    using namespace wmg::cli;
    configure_logging();

    CLI::App app{"Weighted Markov graphs: first-passage analysis and policy optimization"};
    app.require_subcommand(1);
    app.set_help_flag("--help", "Print this help message and exit");
    app.set_version_flag("--version", "wmg 0.1.0");

    std::string graph_file, spec_file, config_file, out_dir = ".";

    auto* analyze = app.add_subcommand("analyze", "Stationary distributions, passage moments and Kemeny constants");
    analyze->add_option("graph", graph_file, "Graph file (.json or .csv)")->required();
    analyze->add_option("--out", out_dir, "Output directory");

    double h = 1e-6, corrupt = 0.0;
    auto* grads = app.add_subcommand("check-gradients", "Compare analytic derivatives with finite differences");
    grads->set_help_flag("--help", "Print this help message and exit"); // frees -h for the step option
    grads->add_option("graph", graph_file, "Graph file (.json or .csv)")->required();
    grads->add_option("--h", h, "Relative finite-difference step")->check(CLI::PositiveNumber);
    grads->add_option("--out", out_dir, "Output directory");
    grads->add_option("--corrupt", corrupt)->group("");

    std::string mode = "max-surprise";
    std::optional<std::uint64_t> seed;
    auto* surveil = app.add_subcommand("surveil", "Grid surveillance policy study");
    surveil->add_option("spec", spec_file, "Study file with grid and optimizer settings")->required();
    surveil->add_option("--mode", mode, "max-surprise, min-variance or baseline")
        ->check(CLI::IsMember({"max-surprise", "min-variance", "baseline"}));
    surveil->add_option("--seed", seed, "Overrides grid and optimizer seeds");
    surveil->add_option("--out", out_dir, "Output directory");

    std::string policy = "all";
    std::uint64_t base_seed = 1;
    int seeds = 150, jobs = 1;
    auto* cascade = app.add_subcommand("cascade", "Road-failure cascades on random geometric networks");
    cascade->add_option("config", config_file, "Cascade configuration file")->required();
    cascade->add_option("--policy", policy, "all, unsupervised, supervised or locally-supervised")
        ->check(CLI::IsMember({"all", "unsupervised", "supervised", "locally-supervised"}));
    cascade->add_option("--seeds", seeds, "Number of instances")->check(CLI::PositiveNumber);
    cascade->add_option("--seed", base_seed, "First instance seed");
    cascade->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    cascade->add_option("--out", out_dir, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_invalid;
    }

    if (*analyze) return finish(cmd_analyze(graph_file, out_dir));
    if (*grads) return finish(cmd_check_gradients(graph_file, h, out_dir, corrupt));
    if (*surveil) return finish(cmd_surveil(spec_file, mode, seed, out_dir));
    return finish(cmd_cascade(config_file, policy, base_seed, seeds, jobs, out_dir));
}
