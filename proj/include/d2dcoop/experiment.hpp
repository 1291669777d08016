#pragma once

// Replicated experiments behind the command-line runner. Each experiment
// writes one CSV table into the output directory and returns a plain-text
// summary of the same rows.
//
// Replication r of sweep point i always uses the stream keyed by
// (seed, i, r), and results are merged in replication order, so output files
// do not depend on the thread count.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "d2dcoop/assignment.hpp"
#include "d2dcoop/config.hpp"
#include "d2dcoop/dma.hpp"
#include "d2dcoop/matching.hpp"
#include "d2dcoop/sim.hpp"

namespace d2dcoop {

class InvariantViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Runs body(i) for i in [0, count) on `threads` workers. The first
/// exception thrown by any job is rethrown after all workers stop.
inline void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body)
{
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) {
            body(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count || failed.load()) {
                    return;
                }
                try {
                    body(i);
                }
                catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) {
                        error = std::current_exception();
                    }
                    failed.store(true);
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

/// Minimal CSV table: header plus rows of already formatted cells.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void write(std::ostream& os) const
    {
        auto line = [&os](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                os << (i ? "," : "") << cells[i];
            }
            os << '\n';
        };
        line(header);
        for (const auto& r : rows) {
            line(r);
        }
    }
};

inline std::string fmt_num(double x)
{
    if (!std::isfinite(x)) {
        throw InvariantViolation("non-finite value in CSV output");
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

inline std::string fmt_num(std::size_t x) { return std::to_string(x); }

struct ExperimentResult {
    std::vector<std::filesystem::path> files;
    std::string summary;
};

namespace detail {

inline void check_dma(const PayoffMatrix& values, const DmaResult& dma, double eps, const char* context)
{
    const auto report = verify_eps_stable(values, dma.matching, eps);
    if (!report.stable) {
        const auto& v = report.violations.front();
        throw InvariantViolation(std::string(context) + ": DMA output is not eps-stable (" +
                                 to_string(v.condition) + ", cu " + std::to_string(v.cu) + ", d2d " +
                                 std::to_string(v.d2d) + ")");
    }
    if (dma.trace.iterations > dma_iteration_cap(values.cu_count(), values.d2d_count(), values.max_value(), eps)) {
        throw InvariantViolation(std::string(context) + ": DMA exceeded the iteration cap");
    }
}

inline void check_suboptimality(const PayoffMatrix& values, const Matching& dma, double optimal, double eps,
                                const char* context)
{
    const double bound =
        eps * static_cast<double>(std::min(values.cu_count(), values.d2d_count()));
    if (assignment_value(values, dma) < optimal - bound - 1e-9 * (1.0 + std::abs(optimal))) {
        throw InvariantViolation(std::string(context) + ": DMA value below optimum minus eps*min{M,N}");
    }
}

inline ProposerSelector selector_for(const ScenarioConfig& cfg, std::uint64_t seed)
{
    return cfg.random_selector ? ProposerSelector::seeded(seed) : ProposerSelector::lowest_index();
}

inline std::vector<std::size_t> default_n_values()
{
    return {5, 10, 15, 20, 25, 30, 35, 40};
}

inline std::vector<double> default_eps_values()
{
    return {0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
}

} // namespace detail

inline const std::vector<std::string>& pairing_algorithms()
{
    static const std::vector<std::string> names{"dma", "optimal", "no_transfer", "random"};
    return names;
}

/// Everything one replication of the pairing study produces.
struct PairingSample {
    std::vector<FrameMetrics> frames;   // one per pairing algorithm, in pairing_algorithms() order
    std::vector<double> gaps;           // marginal gap of every D2D pair under DMA
    std::size_t dma_iterations = 0;
};

/// One scenario, one pair model, four pairings evaluated on common channel
/// realizations.
inline PairingSample pairing_replication(const ScenarioConfig& cfg, Stream& stream, bool with_gaps)
{
    const Scenario scn = generate_scenario(cfg, stream);
    const std::uint64_t training_seed = stream();
    const std::uint64_t fading_key = stream();
    const std::uint64_t selector_seed = stream();
    Stream random_rng(stream());

    const PairModel model = build_pair_model(scn, cfg, training_seed);
    const PayoffMatrix& v = model.values;
    const DmaResult dma = run_dma(v, cfg.eps, detail::selector_for(cfg, selector_seed));
    detail::check_dma(v, dma, cfg.eps, "pairing study");
    const Assignment opt = optimal_assignment(v);
    detail::check_suboptimality(v, dma.matching, opt.value, cfg.eps, "pairing study");

    PairingSample out;
    out.dma_iterations = dma.trace.iterations;
    const Matching pairings[] = {dma.matching, to_matching(opt, v.d2d_count(), cfg.eps),
                                 matching_without_transfer(v, detail::selector_for(cfg, selector_seed)),
                                 random_matching(v, random_rng)};
    for (const auto& mu : pairings) {
        out.frames.push_back(simulate_frame(scn, cfg, model, mu, fading_key));
    }
    if (with_gaps) {
        out.gaps = marginal_gaps(v, dma.matching);
    }
    return out;
}

namespace detail {

template <typename Result, typename Fn>
std::vector<Result> replicate(std::size_t point, const ExperimentSpec& spec, Fn&& fn)
{
    std::vector<Result> out(spec.replications);
    parallel_for(spec.replications, spec.threads, [&](std::size_t r) {
        Stream stream = make_stream(spec.seed, point, r);
        out[r] = fn(stream);
    });
    return out;
}

inline CsvTable run_pairing_family(const std::string& name, const ScenarioConfig& base, const ExperimentSpec& spec)
{
    const auto n_values = spec.sweep.n_values.empty() ? default_n_values() : spec.sweep.n_values;
    const bool gaps = name == "gap-stats";
    CsvTable t;
    if (name == "sumrate-vs-n") {
        t.header = {"n", "algo", "mean_wsr", "stderr"};
    }
    else if (name == "outage-vs-n") {
        t.header = {"n", "algo", "outage_pct", "stderr"};
    }
    else if (name == "gap-stats") {
        t.header = {"n", "max_gap_over_eps", "mean_gap_over_eps"};
    }
    else {
        t.header = {"n", "side", "eau"};
    }

    for (std::size_t i = 0; i < n_values.size(); ++i) {
        ScenarioConfig cfg = base;
        cfg.n_count = n_values[i];
        const auto samples =
            replicate<PairingSample>(i, spec, [&](Stream& s) { return pairing_replication(cfg, s, gaps); });
        const std::string n = fmt_num(cfg.n_count);
        if (gaps) {
            double max_gap = 0.0, mean_gap = 0.0;
            for (const auto& smp : samples) {
                double acc = 0.0;
                for (double g : smp.gaps) {
                    max_gap = std::max(max_gap, g);
                    acc += g;
                }
                mean_gap += acc / static_cast<double>(smp.gaps.size());
            }
            mean_gap /= static_cast<double>(samples.size());
            t.rows.push_back({n, fmt_num(max_gap / cfg.eps), fmt_num(mean_gap / cfg.eps)});
            continue;
        }
        if (name == "avg-utility") {
            std::vector<FrameMetrics> frames;
            for (const auto& smp : samples) {
                frames.push_back(smp.frames[0]);
            }
            const auto sum = aggregate_metrics(frames);
            t.rows.push_back({n, "cu", fmt_num(sum.eau_cu.mean)});
            t.rows.push_back({n, "d2d", fmt_num(sum.eau_d2d.mean)});
            continue;
        }
        for (std::size_t a = 0; a < pairing_algorithms().size(); ++a) {
            std::vector<FrameMetrics> frames;
            for (const auto& smp : samples) {
                frames.push_back(smp.frames[a]);
            }
            const auto sum = aggregate_metrics(frames);
            if (name == "sumrate-vs-n") {
                t.rows.push_back(
                    {n, pairing_algorithms()[a], fmt_num(sum.expected_wsr.mean), fmt_num(sum.expected_wsr.stderr_)});
            }
            else {
                t.rows.push_back({n, pairing_algorithms()[a], fmt_num(100.0 * sum.outage.mean),
                                  fmt_num(100.0 * sum.outage.stderr_)});
            }
        }
    }
    return t;
}

inline CsvTable run_one_timescale_compare(const ScenarioConfig& base, const ExperimentSpec& spec)
{
    const auto n_values = spec.sweep.n_values.empty() ? default_n_values() : spec.sweep.n_values;
    CsvTable t;
    t.header = {"n", "scheme", "mean_wsr", "outage_pct", "csi_count", "switch_count"};
    struct Pair2 {
        FrameMetrics two, one;
    };
    for (std::size_t i = 0; i < n_values.size(); ++i) {
        ScenarioConfig cfg = base;
        cfg.n_count = n_values[i];
        const auto samples = replicate<Pair2>(i, spec, [&](Stream& s) {
            const Scenario scn = generate_scenario(cfg, s);
            Stream two_stream(s());
            Stream one_stream(s());
            Pair2 p;
            p.two = run_frame_two_timescale(scn, cfg, two_stream);
            p.one = run_one_timescale_restricted(scn, cfg, one_stream);
            const std::size_t t_count = cfg.subframes_per_frame;
            if (p.one.csi_acquisition_count != cfg.m_count * cfg.n_count * t_count ||
                p.two.csi_acquisition_count > std::min(cfg.m_count, cfg.n_count) * t_count) {
                throw InvariantViolation("one-timescale-compare: CSI counter out of its defined range");
            }
            return p;
        });
        const double per_subframe = static_cast<double>(cfg.subframes_per_frame);
        for (int which = 0; which < 2; ++which) {
            std::vector<FrameMetrics> frames;
            for (const auto& p : samples) {
                frames.push_back(which == 0 ? p.two : p.one);
            }
            const auto sum = aggregate_metrics(frames);
            t.rows.push_back({fmt_num(cfg.n_count), which == 0 ? "two_timescale" : "one_timescale",
                              fmt_num(sum.weighted_sum_rate.mean), fmt_num(100.0 * sum.outage.mean),
                              fmt_num(sum.csi.mean / per_subframe), fmt_num(sum.switches.mean)});
        }
    }
    return t;
}

inline CsvTable run_epsilon_sweep(const ScenarioConfig& cfg, const ExperimentSpec& spec)
{
    const auto eps_values = spec.sweep.eps_values.empty() ? default_eps_values() : spec.sweep.eps_values;
    CsvTable t;
    t.header = {"eps", "algo", "mean_wsr"};
    // Per replication: value of DMA and no-transfer at every eps, plus the optimum.
    struct Sample {
        std::vector<double> dma, no_transfer;
        double optimal = 0.0;
    };
    const auto samples = replicate<Sample>(0, spec, [&](Stream& s) {
        const Scenario scn = generate_scenario(cfg, s);
        const PairModel model = build_pair_model(scn, cfg, s());
        const std::uint64_t selector_seed = s();
        const PayoffMatrix& v = model.values;
        Sample smp;
        smp.optimal = optimal_assignment(v).value;
        const double nt = assignment_value(v, matching_without_transfer(v, detail::selector_for(cfg, selector_seed)));
        for (double eps : eps_values) {
            const DmaResult dma = run_dma(v, eps, detail::selector_for(cfg, selector_seed));
            detail::check_dma(v, dma, eps, "epsilon-sweep");
            detail::check_suboptimality(v, dma.matching, smp.optimal, eps, "epsilon-sweep");
            smp.dma.push_back(assignment_value(v, dma.matching));
            smp.no_transfer.push_back(nt);
        }
        return smp;
    });
    for (std::size_t e = 0; e < eps_values.size(); ++e) {
        double dma = 0.0, opt = 0.0, nt = 0.0;
        for (const auto& smp : samples) {
            dma += smp.dma[e];
            opt += smp.optimal;
            nt += smp.no_transfer[e];
        }
        const double r = static_cast<double>(samples.size());
        t.rows.push_back({fmt_num(eps_values[e]), "dma", fmt_num(dma / r)});
        t.rows.push_back({fmt_num(eps_values[e]), "optimal", fmt_num(opt / r)});
        t.rows.push_back({fmt_num(eps_values[e]), "no_transfer", fmt_num(nt / r)});
    }
    return t;
}

inline CsvTable run_iterations_vs_epsilon(const ScenarioConfig& base, const ExperimentSpec& spec)
{
    const auto eps_values = spec.sweep.eps_values.empty() ? default_eps_values() : spec.sweep.eps_values;
    auto sizes = spec.sweep.sizes;
    if (sizes.empty()) {
        sizes = {{base.m_count, base.n_count}};
    }
    CsvTable t;
    t.header = {"eps", "m", "n", "mean_iterations"};
    std::vector<std::vector<double>> mean(sizes.size(), std::vector<double>(eps_values.size(), 0.0));
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        ScenarioConfig cfg = base;
        cfg.m_count = sizes[i].first;
        cfg.n_count = sizes[i].second;
        const auto samples = replicate<std::vector<double>>(i, spec, [&](Stream& s) {
            const Scenario scn = generate_scenario(cfg, s);
            const PairModel model = build_pair_model(scn, cfg, s());
            const std::uint64_t selector_seed = s();
            std::vector<double> iters;
            for (double eps : eps_values) {
                const DmaResult dma = run_dma(model.values, eps, detail::selector_for(cfg, selector_seed));
                detail::check_dma(model.values, dma, eps, "iterations-vs-epsilon");
                iters.push_back(static_cast<double>(dma.trace.iterations));
            }
            return iters;
        });
        for (const auto& smp : samples) {
            for (std::size_t e = 0; e < eps_values.size(); ++e) {
                mean[i][e] += smp[e] / static_cast<double>(samples.size());
            }
        }
    }
    for (std::size_t e = 0; e < eps_values.size(); ++e) {
        for (std::size_t i = 0; i < sizes.size(); ++i) {
            t.rows.push_back(
                {fmt_num(eps_values[e]), fmt_num(sizes[i].first), fmt_num(sizes[i].second), fmt_num(mean[i][e])});
        }
    }
    return t;
}

inline CsvTable run_mobility_study(const ScenarioConfig& cfg, const ExperimentSpec& spec)
{
    auto speeds = spec.sweep.speeds;
    if (speeds.empty()) {
        speeds = {0.0, 5.0, 10.0, 20.0};
    }
    CsvTable t;
    t.header = {"t_bucket", "speed", "mean_wsr", "outage_pct"};
    for (double speed : speeds) {
        MobilityParams mp = spec.mobility;
        mp.speed = speed;
        // Every speed replays the same replication streams.
        const auto samples = replicate<std::vector<MobilityBucket>>(0, spec, [&](Stream& s) {
            const Scenario scn = generate_scenario(cfg, s);
            return run_mobility(scn, cfg, mp, s);
        });
        const std::size_t buckets = samples.front().size();
        for (std::size_t b = 0; b < buckets; ++b) {
            double wsr = 0.0, outage = 0.0;
            for (const auto& smp : samples) {
                wsr += smp[b].weighted_sum_rate;
                outage += smp[b].outage_fraction;
            }
            const double r = static_cast<double>(samples.size());
            t.rows.push_back({fmt_num(samples.front()[b].t_start), fmt_num(speed), fmt_num(wsr / r),
                              fmt_num(100.0 * outage / r)});
        }
    }
    return t;
}

inline CsvTable run_single(const ScenarioConfig& cfg, const ExperimentSpec& spec, const std::filesystem::path& dir,
                           std::vector<std::filesystem::path>& files)
{
    Stream s = make_stream(spec.seed, 0, 0);
    const Scenario scn = generate_scenario(cfg, s);
    const std::uint64_t training_seed = s();
    const std::uint64_t fading_key = s();
    const std::uint64_t selector_seed = s();
    const PairModel model = build_pair_model(scn, cfg, training_seed);
    const DmaResult dma = run_dma(model.values, cfg.eps, selector_for(cfg, selector_seed));
    check_dma(model.values, dma, cfg.eps, "single-run");
    const FrameMetrics fm = simulate_frame(scn, cfg, model, dma.matching, fading_key);

    const auto scenario_path = dir / "single-run-scenario.json";
    std::ofstream(scenario_path) << scenario_to_json(scn).dump(2) << '\n';
    files.push_back(scenario_path);
    const auto trace_path = dir / "single-run-dma-trace.csv";
    {
        std::ofstream out(trace_path);
        dma.trace.write_csv(out);
    }
    files.push_back(trace_path);

    CsvTable t;
    t.header = {"m",       "n",        "eps",     "mean_wsr",   "expected_wsr", "outage_pct",
                "eau_cu",  "eau_d2d",  "matched", "iterations", "csi_count"};
    t.rows.push_back({fmt_num(cfg.m_count), fmt_num(cfg.n_count), fmt_num(cfg.eps), fmt_num(fm.weighted_sum_rate),
                      fmt_num(fm.expected_wsr), fmt_num(100.0 * fm.outage_fraction()), fmt_num(fm.eau_cu),
                      fmt_num(fm.eau_d2d), fmt_num(fm.matching.matched_count()), fmt_num(dma.trace.iterations),
                      fmt_num(fm.csi_acquisition_count)});
    return t;
}

inline std::string summarize(const std::string& name, const CsvTable& t)
{
    std::vector<std::size_t> width(t.header.size(), 0);
    for (std::size_t c = 0; c < t.header.size(); ++c) {
        width[c] = t.header[c].size();
        for (const auto& r : t.rows) {
            width[c] = std::max(width[c], r[c].size());
        }
    }
    std::ostringstream os;
    os << name << " (" << t.rows.size() << " rows)\n";
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t c = 0; c < cells.size(); ++c) {
            os << (c ? "  " : "") << cells[c];
            if (c + 1 < cells.size()) {
                os << std::string(width[c] - cells[c].size(), ' ');
            }
        }
        os << '\n';
    };
    line(t.header);
    for (const auto& r : t.rows) {
        line(r);
    }
    return os.str();
}

} // namespace detail

/// Runs the configured experiment and writes `<output_dir>/<name>.csv`.
/// Throws ConfigError for an unusable output directory and
/// InvariantViolation when a checked property fails.
inline ExperimentResult run_experiment(const RunConfig& rc)
{
    const ExperimentSpec& spec = rc.experiment;
    const ScenarioConfig& cfg = rc.scenario;
    cfg.validate();
    const std::filesystem::path dir(spec.output_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) {
        throw ConfigError(spec.output_dir + ": cannot create output directory");
    }

    ExperimentResult result;
    CsvTable table;
    const std::string& name = spec.name;
    if (name == "sumrate-vs-n" || name == "outage-vs-n" || name == "gap-stats" || name == "avg-utility") {
        table = detail::run_pairing_family(name, cfg, spec);
    }
    else if (name == "one-timescale-compare") {
        table = detail::run_one_timescale_compare(cfg, spec);
    }
    else if (name == "epsilon-sweep") {
        table = detail::run_epsilon_sweep(cfg, spec);
    }
    else if (name == "iterations-vs-epsilon") {
        table = detail::run_iterations_vs_epsilon(cfg, spec);
    }
    else if (name == "mobility") {
        table = detail::run_mobility_study(cfg, spec);
    }
    else if (name == "single-run") {
        table = detail::run_single(cfg, spec, dir, result.files);
    }
    else {
        throw ConfigError("unknown experiment \"" + name + "\"");
    }

    const auto path = dir / (name + ".csv");
    std::ofstream out(path);
    if (!out) {
        throw ConfigError(path.string() + ": cannot write");
    }
    table.write(out);
    out.close();
    if (!out) {
        throw ConfigError(path.string() + ": write failed");
    }
    result.files.insert(result.files.begin(), path);
    result.summary = detail::summarize(name, table);
    return result;
}

} // namespace d2dcoop
