#pragma once

// JSON configuration: scenario parameters (Table II defaults for anything
// absent) plus the experiment to run.
//
//   {
//     "m_count": 15, "n_count": 20, "eps": 1,
//     "radio": {"noise_dbm": -100, "p_c_mw": 20, "p_d_mw": 20, "gamma": 4},
//     "experiment": {"name": "sumrate-vs-n", "replications": 1000,
//                    "sweep": {"n_values": [5, 10, 15]}}
//   }

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "d2dcoop/sim.hpp"

namespace d2dcoop {

inline const std::vector<std::string>& experiment_names()
{
    static const std::vector<std::string> names{
        "gap-stats",     "avg-utility",           "sumrate-vs-n", "outage-vs-n", "one-timescale-compare",
        "epsilon-sweep", "iterations-vs-epsilon", "mobility",     "single-run"};
    return names;
}

struct SweepSpec {
    std::vector<std::size_t> n_values;
    std::vector<double> eps_values;
    std::vector<std::pair<std::size_t, std::size_t>> sizes;   // (M, N)
    std::vector<double> speeds;
};

struct ExperimentSpec {
    std::string name = "single-run";
    SweepSpec sweep;
    std::size_t replications = 1000;
    std::uint64_t seed = 1;
    std::string output_dir = "results";
    std::size_t threads = 1;
    MobilityParams mobility;
};

struct RunConfig {
    ScenarioConfig scenario;
    ExperimentSpec experiment;
};

namespace detail {

class ConfigReader {
public:
    ConfigReader(const nlohmann::json& j, std::string path)
        : j_(j)
        , path_(std::move(path))
    {
        if (!j_.is_object()) {
            throw ConfigError(where() + ": expected an object");
        }
    }

    /// Rejects any key that was never asked for.
    void finish() const
    {
        for (const auto& [key, value] : j_.items()) {
            if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
                throw ConfigError(where(key) + ": unknown key");
            }
        }
    }

    bool has(const std::string& key)
    {
        seen_.push_back(key);
        return j_.contains(key);
    }

    double number(const std::string& key, double fallback)
    {
        if (!has(key)) {
            return fallback;
        }
        const auto& v = j_.at(key);
        if (!v.is_number()) {
            throw ConfigError(where(key) + ": expected a number");
        }
        return v.get<double>();
    }

    std::uint64_t count(const std::string& key, std::uint64_t fallback)
    {
        if (!has(key)) {
            return fallback;
        }
        return as_count(j_.at(key), where(key));
    }

    bool boolean(const std::string& key, bool fallback)
    {
        if (!has(key)) {
            return fallback;
        }
        const auto& v = j_.at(key);
        if (!v.is_boolean()) {
            throw ConfigError(where(key) + ": expected true or false");
        }
        return v.get<bool>();
    }

    std::string string(const std::string& key, const std::string& fallback)
    {
        if (!has(key)) {
            return fallback;
        }
        const auto& v = j_.at(key);
        if (!v.is_string()) {
            throw ConfigError(where(key) + ": expected a string");
        }
        return v.get<std::string>();
    }

    Range range(const std::string& key, Range fallback)
    {
        if (!has(key)) {
            return fallback;
        }
        const auto& v = j_.at(key);
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
            throw ConfigError(where(key) + ": expected [lo, hi]");
        }
        return {v[0].get<double>(), v[1].get<double>()};
    }

    std::vector<double> numbers(const std::string& key)
    {
        std::vector<double> out;
        if (!has(key)) {
            return out;
        }
        const auto& v = j_.at(key);
        if (!v.is_array()) {
            throw ConfigError(where(key) + ": expected an array of numbers");
        }
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) {
                throw ConfigError(where(key) + "[" + std::to_string(i) + "]: expected a number");
            }
            out.push_back(v[i].get<double>());
        }
        return out;
    }

    std::vector<std::size_t> counts(const std::string& key)
    {
        std::vector<std::size_t> out;
        if (!has(key)) {
            return out;
        }
        const auto& v = j_.at(key);
        if (!v.is_array()) {
            throw ConfigError(where(key) + ": expected an array of integers");
        }
        for (std::size_t i = 0; i < v.size(); ++i) {
            out.push_back(as_count(v[i], where(key) + "[" + std::to_string(i) + "]"));
        }
        return out;
    }

    ConfigReader child(const std::string& key)
    {
        static const nlohmann::json empty = nlohmann::json::object();
        if (!has(key)) {
            return ConfigReader(empty, where(key));
        }
        return ConfigReader(j_.at(key), where(key));
    }

    const nlohmann::json& raw(const std::string& key) const { return j_.at(key); }

    std::string where(const std::string& key = "") const
    {
        return key.empty() ? path_ : path_ + "." + key;
    }

private:
    static std::uint64_t as_count(const nlohmann::json& v, const std::string& where)
    {
        if (v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
            return v.get<std::uint64_t>();
        }
        throw ConfigError(where + ": expected a non-negative integer");
    }

    const nlohmann::json& j_;
    std::string path_;
    std::vector<std::string> seen_;
};

inline void require(bool ok, const std::string& where, const std::string& what)
{
    if (!ok) {
        throw ConfigError(where + ": " + what);
    }
}

} // namespace detail

/// Builds a validated configuration from a parsed document. Errors name the
/// offending path, e.g. "$.experiment.replications".
inline RunConfig parse_config_json(const nlohmann::json& doc)
{
    detail::ConfigReader root(doc, "$");
    RunConfig rc;
    ScenarioConfig& s = rc.scenario;

    s.m_count = root.count("m_count", s.m_count);
    s.n_count = root.count("n_count", s.n_count);
    s.cell_radius = root.number("cell_radius", s.cell_radius);
    s.d2d_ring = root.range("d2d_ring", s.d2d_ring);
    s.d2d_link_range = root.range("d2d_link_range", s.d2d_link_range);
    {
        auto radio = root.child("radio");
        s.radio.n0 = dbm_to_watts(radio.number("noise_dbm", -100.0));
        s.radio.p_c = radio.number("p_c_mw", 20.0) * 1e-3;
        s.radio.p_d = radio.number("p_d_mw", 20.0) * 1e-3;
        s.radio.gamma = radio.number("gamma", s.radio.gamma);
        radio.finish();
    }
    if (root.has("r_th") && root.has("r_th_bps")) {
        throw ConfigError("$: give either r_th (nats/s/Hz) or r_th_bps, not both");
    }
    s.r_th = root.has("r_th") ? root.number("r_th", s.r_th) : bps_to_nats(root.number("r_th_bps", 1.8));
    s.weights = root.numbers("weights");
    s.subframes_per_frame = root.count("subframes_per_frame", s.subframes_per_frame);
    s.training_samples = root.count("training_samples", s.training_samples);
    s.eps = root.number("eps", s.eps);
    s.outage_margin = root.number("outage_margin", s.outage_margin);
    {
        const std::string basis = root.string("outage_basis", "expected");
        detail::require(basis == "expected" || basis == "realized", root.where("outage_basis"),
                        "expected \"expected\" or \"realized\"");
        s.outage_basis = basis == "expected" ? OutageBasis::expected : OutageBasis::realized;
    }
    {
        const std::string sel = root.string("proposer_selection", "random");
        detail::require(sel == "random" || sel == "lowest-index", root.where("proposer_selection"),
                        "expected \"random\" or \"lowest-index\"");
        s.random_selector = sel == "random";
    }

    ExperimentSpec& e = rc.experiment;
    {
        auto ex = root.child("experiment");
        e.name = ex.string("name", e.name);
        const auto& names = experiment_names();
        detail::require(std::find(names.begin(), names.end(), e.name) != names.end(), ex.where("name"),
                        "unknown experiment \"" + e.name + "\"");
        e.replications = ex.count("replications", e.replications);
        detail::require(e.replications >= 1, ex.where("replications"), "must be >= 1");
        e.seed = ex.count("seed", e.seed);
        e.output_dir = ex.string("output_dir", e.output_dir);
        e.threads = ex.count("threads", e.threads);
        detail::require(e.threads >= 1, ex.where("threads"), "must be >= 1");

        auto sweep = ex.child("sweep");
        e.sweep.n_values = sweep.counts("n_values");
        for (std::size_t n : e.sweep.n_values) {
            detail::require(n >= 1, sweep.where("n_values"), "values must be >= 1");
        }
        e.sweep.eps_values = sweep.numbers("eps_values");
        for (double x : e.sweep.eps_values) {
            detail::require(x > 0.0 && std::isfinite(x), sweep.where("eps_values"), "values must be > 0");
        }
        e.sweep.speeds = sweep.numbers("speeds");
        for (double x : e.sweep.speeds) {
            detail::require(x >= 0.0 && std::isfinite(x), sweep.where("speeds"), "values must be >= 0");
        }
        if (sweep.has("sizes")) {
            const auto& v = sweep.raw("sizes");
            detail::require(v.is_array(), sweep.where("sizes"), "expected an array of [M, N] pairs");
            for (std::size_t i = 0; i < v.size(); ++i) {
                const std::string w = sweep.where("sizes") + "[" + std::to_string(i) + "]";
                detail::require(v[i].is_array() && v[i].size() == 2 && v[i][0].is_number_integer() &&
                                    v[i][1].is_number_integer() && v[i][0].get<std::int64_t>() >= 1 &&
                                    v[i][1].get<std::int64_t>() >= 1,
                                w, "expected [M, N] with M, N >= 1");
                e.sweep.sizes.emplace_back(v[i][0].get<std::size_t>(), v[i][1].get<std::size_t>());
            }
        }
        sweep.finish();

        auto mob = ex.child("mobility");
        e.mobility.duration = mob.number("duration", e.mobility.duration);
        e.mobility.subframe_len = mob.number("subframe_len", e.mobility.subframe_len);
        e.mobility.bucket_len = mob.number("bucket_len", e.mobility.bucket_len);
        e.mobility.pairs_move_together = mob.boolean("pairs_move_together", e.mobility.pairs_move_together);
        mob.finish();
        ex.finish();
    }
    s.seed = e.seed;
    root.finish();

    // Range checks carry the field path as well.
    auto check = [](bool ok, const char* path, const char* what) { detail::require(ok, path, what); };
    check(s.m_count >= 1, "$.m_count", "must be >= 1");
    check(s.n_count >= 1, "$.n_count", "must be >= 1");
    check(s.cell_radius > 0.0 && std::isfinite(s.cell_radius), "$.cell_radius", "must be > 0");
    check(s.d2d_ring.lo > 0.0 && s.d2d_ring.hi >= s.d2d_ring.lo && s.d2d_ring.hi <= s.cell_radius, "$.d2d_ring",
          "must satisfy 0 < lo <= hi <= cell_radius");
    check(s.d2d_link_range.lo > 0.0 && s.d2d_link_range.hi >= s.d2d_link_range.lo, "$.d2d_link_range",
          "must satisfy 0 < lo <= hi");
    check(s.radio.p_c > 0.0 && std::isfinite(s.radio.p_c), "$.radio.p_c_mw", "must be > 0");
    check(s.radio.p_d > 0.0 && std::isfinite(s.radio.p_d), "$.radio.p_d_mw", "must be > 0");
    check(s.radio.n0 > 0.0 && std::isfinite(s.radio.n0), "$.radio.noise_dbm", "must be finite");
    check(s.radio.gamma >= 2.0 && std::isfinite(s.radio.gamma), "$.radio.gamma", "must be >= 2");
    check(s.r_th >= 0.0 && std::isfinite(s.r_th), "$.r_th", "must be >= 0");
    check(s.subframes_per_frame >= 1, "$.subframes_per_frame", "must be >= 1");
    check(s.training_samples >= 1, "$.training_samples", "must be >= 1");
    check(s.eps > 0.0 && std::isfinite(s.eps), "$.eps", "must be > 0");
    check(s.outage_margin >= 0.0 && std::isfinite(s.outage_margin), "$.outage_margin", "must be >= 0");
    std::size_t max_n = s.n_count;
    for (std::size_t n : e.sweep.n_values) {
        max_n = std::max(max_n, n);
    }
    for (const auto& [m, n] : e.sweep.sizes) {
        max_n = std::max(max_n, n);
    }
    check(s.weights.empty() || s.weights.size() >= max_n, "$.weights",
          "must be empty or list a weight for every D2D pair in the sweep");
    for (double w : s.weights) {
        check(w > 0.0 && std::isfinite(w), "$.weights", "entries must be > 0");
    }
    try {
        e.mobility.validate();
    }
    catch (const ConfigError& err) {
        throw ConfigError(std::string("$.experiment.mobility: ") + err.what());
    }
    s.validate();
    return rc;
}

inline RunConfig parse_config_text(const std::string& text)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    }
    catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("$: malformed JSON: ") + e.what());
    }
    return parse_config_json(doc);
}

inline RunConfig parse_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(path + ": cannot open");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config_text(ss.str());
    }
    catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

} // namespace d2dcoop
