// Command-line experiment runner.
//
//   d2dcoop_cli --config configs/fig5_sumrate.json --threads 4
//
// Exit status: 0 success, 1 configuration or I/O error, 2 violated invariant.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "d2dcoop/config.hpp"
#include "d2dcoop/experiment.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"Two-timescale cooperative D2D pairing experiments"};
    std::string config_path;
    std::optional<std::string> experiment;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> replications;
    std::optional<std::string> out_dir;
    std::optional<std::size_t> threads;
    app.add_option("--config", config_path, "JSON configuration file (defaults apply when omitted)");
    app.add_option("--experiment", experiment, "Experiment name")
        ->check(CLI::IsMember(d2dcoop::experiment_names()));
    app.add_option("--seed", seed, "Base seed");
    app.add_option("--replications", replications, "Replications per sweep point")->check(CLI::PositiveNumber);
    app.add_option("--out", out_dir, "Output directory");
    app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    try {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    d2dcoop::RunConfig rc;
    try {
        rc = config_path.empty() ? d2dcoop::parse_config_text("{}") : d2dcoop::parse_config(config_path);
        if (experiment) {
            rc.experiment.name = *experiment;
        }
        if (seed) {
            rc.experiment.seed = *seed;
            rc.scenario.seed = *seed;
        }
        if (replications) {
            rc.experiment.replications = *replications;
        }
        if (out_dir) {
            rc.experiment.output_dir = *out_dir;
        }
        if (threads) {
            rc.experiment.threads = *threads;
        }
        const auto result = d2dcoop::run_experiment(rc);
        std::cout << result.summary;
        for (const auto& f : result.files) {
            std::cout << "wrote " << f.string() << '\n';
        }
    }
    catch (const d2dcoop::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    }
    catch (const d2dcoop::InvariantViolation& e) {
        std::cerr << "invariant violated: " << e.what() << '\n';
        return 2;
    }
    catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
