// fredholm_mc: Monte Carlo experiments for Fredholm equations of the second kind.

#include "fredholm/harness/experiment.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace fredholm;
using namespace fredholm::harness;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfigError = 2, kContractionError = 3, kBudgetError = 4 };

struct Flags {
    std::string config;
    Overrides over;
};

void add_common(CLI::App* cmd, Flags& flags)
{
    cmd->add_option("--config", flags.config, "experiment config file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", flags.over.seed, "64-bit seed (overrides config)");
    cmd->add_option("--out", flags.over.out_dir, "output directory (overrides output.dir)");
    cmd->add_option("--method", flags.over.method, "dtm, recursive or reference");
    cmd->add_option("--level", flags.over.level, "band confidence level");
    cmd->add_option("--sims", flags.over.sims, "Gaussian simulations for the sup quantile");
    cmd->add_option("--trials", flags.over.trials, "outer trials for coverage");
}

int run(const std::string& command, const Flags& flags)
{
    const auto start = std::chrono::steady_clock::now();
    const auto config = ExperimentConfig::resolve(KeyValueConfig::load(flags.config), flags.over);
    if (config.seed_generated) {
        std::cerr << "seed: " << config.seed << " (generated)\n";
    }
    const auto out = run_command(command, config);
    write_outputs(out, config.out_dir);
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    std::cerr << command << ": wrote " << (fs::path(config.out_dir) / "report.json").string() << " in "
              << elapsed.count() << " s\n";
    return kOk;
}

int run_replay(const std::string& report_path, const std::optional<std::string>& scratch)
{
    fs::path report(report_path);
    if (fs::is_directory(report)) {
        report /= "report.json";
    }
    const fs::path dir = scratch ? fs::path(*scratch) : fs::temp_directory_path() / ("fredholm-replay-" + std::to_string(
                                                                                          std::chrono::steady_clock::now()
                                                                                              .time_since_epoch()
                                                                                              .count()));
    const auto result = replay(report, dir);
    if (!scratch) {
        fs::remove_all(dir);
    }
    for (const auto& name : result.compared) {
        const bool bad = std::find(result.mismatched.begin(), result.mismatched.end(), name) != result.mismatched.end();
        std::cout << (bad ? "DIFFERS   " : "identical ") << name << "\n";
    }
    if (!result.identical()) {
        std::cerr << "replay: outputs differ from " << report.string() << "\n";
        return kFailure;
    }
    std::cout << "replay: " << result.command << " reproduced byte-identical outputs\n";
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Monte Carlo solvers for linear Fredholm integral equations of the second kind"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    Flags flags;
    std::vector<std::pair<std::string, CLI::App*>> commands;
    for (const auto& [name, help] : {std::pair{"solve", "solve one problem, optionally with a confidence band"},
                                     std::pair{"compare", "DTM vs recursive draw counts at matched RMSE over a sweep"},
                                     std::pair{"coverage", "coverage of confidence bands over independent trials"},
                                     std::pair{"calibrate", "calibrate the subgaussian band constant from pilot runs"}}) {
        auto* cmd = app.add_subcommand(name, help);
        add_common(cmd, flags);
        commands.emplace_back(name, cmd);
    }
    std::string report_path;
    std::optional<std::string> scratch;
    auto* replay_cmd = app.add_subcommand("replay", "re-run a recorded report and byte-compare its outputs");
    replay_cmd->add_option("--config,report", report_path, "report.json or the directory holding it")->required();
    replay_cmd->add_option("--out", scratch, "directory for the re-run (default: temporary, removed afterwards)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (replay_cmd->parsed()) {
            return run_replay(report_path, scratch);
        }
        for (const auto& [name, cmd] : commands) {
            if (cmd->parsed()) {
                return run(name, flags);
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const InvalidProblemError& e) {
        std::cerr << "config error: invalid problem: " << e.what() << "\n";
        return kConfigError;
    } catch (const ContractionError& e) {
        std::cerr << "contraction violated: " << e.what() << "\n";
        return kContractionError;
    } catch (const BudgetError& e) {
        std::cerr << "budget gate violated: " << e.what() << "\n";
        return kBudgetError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}
