#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "d2dcoop/experiment.hpp"

using namespace d2dcoop;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("d2dcoop_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p)
{
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(slurp(p));
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            cells.push_back(cell);
        }
        rows.push_back(cells);
    }
    return rows;
}

RunConfig quick(const std::string& name, const fs::path& out)
{
    RunConfig rc = parse_config_text("{}");
    rc.scenario.m_count = 4;
    rc.scenario.n_count = 5;
    rc.scenario.training_samples = 200;
    rc.scenario.subframes_per_frame = 50;
    rc.experiment.name = name;
    rc.experiment.replications = 2;
    rc.experiment.seed = 17;
    rc.experiment.output_dir = out.string();
    rc.experiment.sweep.n_values = {3, 6};
    rc.experiment.sweep.eps_values = {0.5, 2.0};
    rc.experiment.sweep.sizes = {{3, 3}, {4, 6}};
    rc.experiment.sweep.speeds = {0.0, 20.0};
    rc.experiment.mobility.duration = 0.2;
    rc.experiment.mobility.bucket_len = 0.1;
    return rc;
}

} // namespace

TEST(RunExperiment, SingleRunIsOneRowAndByteIdentical)
{
    const fs::path out = scratch("single");
    RunConfig rc = parse_config_text(R"({"m_count": 1, "n_count": 1, "training_samples": 300,
                                         "subframes_per_frame": 100, "experiment": {"seed": 5}})");
    rc.experiment.output_dir = out.string();
    run_experiment(rc);
    const auto first = slurp(out / "single-run.csv");
    const auto rows = read_csv(out / "single-run.csv");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].front(), "m");
    run_experiment(rc);
    EXPECT_EQ(slurp(out / "single-run.csv"), first);
    EXPECT_TRUE(fs::exists(out / "single-run-scenario.json"));
    EXPECT_TRUE(fs::exists(out / "single-run-dma-trace.csv"));
}

TEST(RunExperiment, SchemasAndRowCounts)
{
    struct Case {
        std::string name;
        std::vector<std::string> header;
        std::size_t rows;
    };
    const std::vector<Case> cases{
        {"sumrate-vs-n", {"n", "algo", "mean_wsr", "stderr"}, 8},
        {"outage-vs-n", {"n", "algo", "outage_pct", "stderr"}, 8},
        {"gap-stats", {"n", "max_gap_over_eps", "mean_gap_over_eps"}, 2},
        {"avg-utility", {"n", "side", "eau"}, 4},
        {"epsilon-sweep", {"eps", "algo", "mean_wsr"}, 6},
        {"iterations-vs-epsilon", {"eps", "m", "n", "mean_iterations"}, 4},
        {"one-timescale-compare", {"n", "scheme", "mean_wsr", "outage_pct", "csi_count", "switch_count"}, 4},
        {"mobility", {"t_bucket", "speed", "mean_wsr", "outage_pct"}, 4},
    };
    for (const auto& c : cases) {
        const fs::path out = scratch(c.name);
        const auto result = run_experiment(quick(c.name, out));
        const auto rows = read_csv(out / (c.name + ".csv"));
        ASSERT_FALSE(rows.empty()) << c.name;
        EXPECT_EQ(rows[0], c.header) << c.name;
        EXPECT_EQ(rows.size() - 1, c.rows) << c.name;
        for (std::size_t r = 1; r < rows.size(); ++r) {
            EXPECT_EQ(rows[r].size(), c.header.size()) << c.name;
            for (const auto& cell : rows[r]) {
                EXPECT_EQ(cell.find("nan"), std::string::npos) << c.name;
                EXPECT_EQ(cell.find("inf"), std::string::npos) << c.name;
            }
        }
        // The summary lists exactly the CSV rows.
        for (std::size_t r = 1; r < rows.size(); ++r) {
            EXPECT_NE(result.summary.find(rows[r][2]), std::string::npos) << c.name;
        }
    }
}

TEST(RunExperiment, OneTimescaleCounters)
{
    const fs::path out = scratch("counters");
    run_experiment(quick("one-timescale-compare", out));
    const auto rows = read_csv(out / "one-timescale-compare.csv");
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const double n = std::stod(rows[r][0]);
        const double csi = std::stod(rows[r][4]);
        if (rows[r][1] == "one_timescale") {
            EXPECT_EQ(csi, 4.0 * n);
        }
        else {
            EXPECT_LE(csi, std::min(4.0, n));
        }
    }
}

TEST(RunExperiment, ThreadCountDoesNotChangeOutput)
{
    const fs::path a = scratch("threads1");
    const fs::path b = scratch("threads3");
    RunConfig rc = quick("sumrate-vs-n", a);
    rc.experiment.replications = 5;
    run_experiment(rc);
    rc.experiment.output_dir = b.string();
    rc.experiment.threads = 3;
    run_experiment(rc);
    EXPECT_EQ(slurp(a / "sumrate-vs-n.csv"), slurp(b / "sumrate-vs-n.csv"));
}

TEST(RunExperiment, UnwritableOutputDirectory)
{
    RunConfig rc = quick("single-run", "/proc/d2dcoop_cannot_write_here");
    EXPECT_THROW(run_experiment(rc), ConfigError);
}

TEST(ParallelFor, PropagatesErrors)
{
    EXPECT_THROW(parallel_for(10, 3,
                              [](std::size_t i) {
                                  if (i == 7) {
                                      throw InvariantViolation("boom");
                                  }
                              }),
                 InvariantViolation);
}

#ifdef D2DCOOP_CLI_PATH
TEST(Cli, ExitCodes)
{
    const fs::path dir = scratch("cli");
    fs::create_directories(dir);
    const std::string cli = D2DCOOP_CLI_PATH;
    std::ofstream(dir / "bad.json") << R"({"eps": 0})";
    std::ofstream(dir / "ok.json") << R"({"m_count": 1, "n_count": 1, "training_samples": 100,
                                          "subframes_per_frame": 10})";
    auto run = [&](const std::string& args) {
        const int status = std::system((cli + " " + args + " > /dev/null 2>&1").c_str());
        return WEXITSTATUS(status);
    };
    EXPECT_EQ(run("--config " + (dir / "bad.json").string()), 1);
    EXPECT_EQ(run("--config " + (dir / "ok.json").string() + " --out " + (dir / "out").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "out" / "single-run.csv"));
    EXPECT_EQ(run("--experiment nonsense"), 1);
}
#endif
