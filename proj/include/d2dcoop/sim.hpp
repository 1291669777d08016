#pragma once

// Single-cell scenarios and frame-level simulation of the two-timescale
// scheme, the switch-restricted one-timescale benchmark and the mobility
// study.
//
// Fading draws come from two sources:
//  - training draws (statistical CSI) use one sub-stream per node or pair, so
//    they can be regenerated for any subset of pairs;
//  - subframe draws are counter based, keyed by (frame key, subframe, link,
//    endpoints), so every matching evaluated on the same frame sees the same
//    channel realizations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "d2dcoop/assignment.hpp"
#include "d2dcoop/chanmodel.hpp"
#include "d2dcoop/dma.hpp"
#include "d2dcoop/payoff.hpp"
#include "d2dcoop/policy.hpp"
#include "d2dcoop/random.hpp"

namespace d2dcoop {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

/// Which CU rate decides outage.
///  expected: the long-term rate predicted from statistical CSI for the
///            pairing in force (exactly r_th for a CU with a feasible partner);
///  realized: the average over the frame's subframes.
enum class OutageBasis { expected, realized };

struct ScenarioConfig {
    std::size_t m_count = 15;
    std::size_t n_count = 20;
    double cell_radius = 500.0;
    Range d2d_ring{200.0, 400.0};
    Range d2d_link_range{10.0, 30.0};
    RadioParams radio{};
    double r_th = bps_to_nats(1.8);
    std::vector<double> weights;   // empty: every w_n = 1
    std::size_t subframes_per_frame = 1000;
    std::size_t training_samples = 10000;
    double eps = 1.0;
    std::uint64_t seed = 1;
    OutageBasis outage_basis = OutageBasis::expected;
    double outage_margin = 0.0;    // outage iff rate < r_th - margin
    bool random_selector = true;   // DMA: random choice among stale proposers

    double weight(std::size_t n) const { return weights.empty() ? 1.0 : weights.at(n); }

    void validate() const
    {
        if (m_count < 1 || n_count < 1) {
            throw ConfigError("m_count and n_count must be >= 1");
        }
        if (!(cell_radius > 0.0)) {
            throw ConfigError("cell_radius must be > 0");
        }
        if (!(d2d_ring.lo > 0.0) || !(d2d_ring.hi >= d2d_ring.lo) || !(d2d_ring.hi <= cell_radius)) {
            throw ConfigError("d2d_ring must satisfy 0 < lo <= hi <= cell_radius");
        }
        if (!(d2d_link_range.lo > 0.0) || !(d2d_link_range.hi >= d2d_link_range.lo)) {
            throw ConfigError("d2d_link_range must satisfy 0 < lo <= hi");
        }
        try {
            radio.validate();
        }
        catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        if (!(r_th >= 0.0) || !std::isfinite(r_th)) {
            throw ConfigError("r_th must be finite and >= 0");
        }
        if (!weights.empty() && weights.size() < n_count) {
            throw ConfigError("weights must list at least n_count entries");
        }
        for (double w : weights) {
            if (!(w > 0.0) || !std::isfinite(w)) {
                throw ConfigError("weights must be finite and > 0");
            }
        }
        if (subframes_per_frame < 1) {
            throw ConfigError("subframes_per_frame must be >= 1");
        }
        if (training_samples < 1) {
            throw ConfigError("training_samples must be >= 1");
        }
        if (!(eps > 0.0) || !std::isfinite(eps)) {
            throw ConfigError("eps must be finite and > 0");
        }
        if (!(outage_margin >= 0.0) || !std::isfinite(outage_margin)) {
            throw ConfigError("outage_margin must be finite and >= 0");
        }
    }

    bool in_outage(double rate) const { return rate < r_th - outage_margin; }
};

struct Scenario {
    Position bs{};
    std::vector<Position> cu_positions;
    std::vector<Position> dt_positions;
    std::vector<Position> dr_positions;

    std::size_t cu_count() const { return cu_positions.size(); }
    std::size_t d2d_count() const { return dt_positions.size(); }

    PairGeometry geometry(std::size_t m, std::size_t n) const
    {
        return PairGeometry::from_positions(bs, cu_positions[m], dt_positions[n], dr_positions[n]);
    }

    friend bool operator==(const Scenario& a, const Scenario& b)
    {
        auto same = [](const std::vector<Position>& x, const std::vector<Position>& y) {
            return x.size() == y.size() && std::equal(x.begin(), x.end(), y.begin(), [](auto& p, auto& q) {
                       return p.x == q.x && p.y == q.y;
                   });
        };
        return a.bs.x == b.bs.x && a.bs.y == b.bs.y && same(a.cu_positions, b.cu_positions) &&
               same(a.dt_positions, b.dt_positions) && same(a.dr_positions, b.dr_positions);
    }
};

inline Scenario generate_scenario(const ScenarioConfig& cfg, Stream& rng)
{
    cfg.validate();
    constexpr double two_pi = 6.283185307179586;
    Scenario s;
    s.cu_positions.reserve(cfg.m_count);
    for (std::size_t m = 0; m < cfg.m_count; ++m) {
        const double a = two_pi * uniform01(rng);
        s.cu_positions.push_back({cfg.cell_radius * std::cos(a), cfg.cell_radius * std::sin(a)});
    }
    const double r2_lo = cfg.d2d_ring.lo * cfg.d2d_ring.lo;
    const double r2_hi = cfg.d2d_ring.hi * cfg.d2d_ring.hi;
    for (std::size_t n = 0; n < cfg.n_count; ++n) {
        // Uniform over the annulus area: r^2 is uniform.
        const double r = std::sqrt(uniform(rng, r2_lo, r2_hi));
        const double a = two_pi * uniform01(rng);
        const Position dt{r * std::cos(a), r * std::sin(a)};
        const double d = uniform(rng, cfg.d2d_link_range.lo, cfg.d2d_link_range.hi);
        const double b = two_pi * uniform01(rng);
        s.dt_positions.push_back(dt);
        s.dr_positions.push_back({dt.x + d * std::cos(b), dt.y + d * std::sin(b)});
    }
    return s;
}

inline nlohmann::json scenario_to_json(const Scenario& s)
{
    auto pts = [](const std::vector<Position>& v) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& p : v) {
            a.push_back({p.x, p.y});
        }
        return a;
    };
    return {{"bs", {s.bs.x, s.bs.y}},
            {"cu", pts(s.cu_positions)},
            {"dt", pts(s.dt_positions)},
            {"dr", pts(s.dr_positions)}};
}

inline Scenario scenario_from_json(const nlohmann::json& j)
{
    auto pt = [](const nlohmann::json& a) { return Position{a.at(0).get<double>(), a.at(1).get<double>()}; };
    Scenario s;
    s.bs = pt(j.at("bs"));
    for (const auto& p : j.at("cu")) {
        s.cu_positions.push_back(pt(p));
    }
    for (const auto& p : j.at("dt")) {
        s.dt_positions.push_back(pt(p));
    }
    for (const auto& p : j.at("dr")) {
        s.dr_positions.push_back(pt(p));
    }
    if (s.dt_positions.size() != s.dr_positions.size()) {
        throw std::invalid_argument("scenario: dt and dr lists differ in length");
    }
    return s;
}

enum class Link : std::uint64_t { mb = 1, mn = 2, nb = 3, nn = 4 };

/// Unit-mean exponential fading for subframe t of one frame. Pure function of
/// its arguments.
class SubframeFading {
public:
    explicit SubframeFading(std::uint64_t key)
        : key_(key)
    {
    }

    double operator()(std::size_t t, Link link, std::size_t a, std::size_t b = 0) const
    {
        std::uint64_t h = splitmix64(key_ ^ splitmix64((static_cast<std::uint64_t>(t) << 3) |
                                                       static_cast<std::uint64_t>(link)));
        h = splitmix64(h ^ splitmix64((static_cast<std::uint64_t>(a) << 32) ^ static_cast<std::uint64_t>(b)));
        return -std::log1p(-static_cast<double>(h >> 11) * 0x1.0p-53);
    }

private:
    std::uint64_t key_;
};

/// K training fading draws of one link. Nodes own their links to the BS and
/// the DT -> DR link; the CU -> DT link belongs to the pair.
inline std::vector<double> training_fading(std::uint64_t training_seed, Link link, std::size_t a, std::size_t b,
                                           std::size_t count)
{
    Stream rng = make_stream(training_seed, static_cast<std::uint64_t>(link), a, b);
    std::vector<double> xi(count);
    for (auto& x : xi) {
        x = exponential1(rng);
    }
    return xi;
}

/// Long-term quantities of every potential pairing, estimated from the
/// training draws.
struct PairModel {
    PayoffMatrix values;
    std::vector<std::optional<ThresholdPolicy>> policies;   // m * N + n
    std::vector<double> policy_cu_rate;   // CU rate under the pair's policy (training set)
    std::vector<double> relay_cu_rate;    // E{r_c} with the whole subframe to the CU
    std::vector<double> direct_cu_rate;   // per CU, E{ln(1 + s_mb)}
    std::uint64_t training_seed = 0;

    std::size_t index(std::size_t m, std::size_t n) const { return m * values.d2d_count() + n; }
    const std::optional<ThresholdPolicy>& policy(std::size_t m, std::size_t n) const
    {
        return policies[index(m, n)];
    }
};

namespace detail {

inline double snr(double power, double distance, double gamma, double n0, double xi)
{
    return power * xi * std::pow(distance, -gamma) / n0;
}

/// K subframe states of pair (m, n) at `geom` from the stored training draws.
inline std::vector<RateState> training_states(const PairGeometry& geom, const RadioParams& radio,
                                              const std::vector<double>& xi_mb, const std::vector<double>& xi_mn,
                                              const std::vector<double>& xi_nb, const std::vector<double>& xi_nn)
{
    const double k_mb = radio.p_c * std::pow(geom.d_mb, -radio.gamma) / radio.n0;
    const double k_mn = radio.p_c * std::pow(geom.d_mn, -radio.gamma) / radio.n0;
    const double k_nb = radio.p_d * std::pow(geom.d_nb, -radio.gamma) / radio.n0;
    const double k_nn = radio.p_d * std::pow(geom.d_nn, -radio.gamma) / radio.n0;
    std::vector<RateState> states(xi_mb.size());
    for (std::size_t k = 0; k < states.size(); ++k) {
        const double s_mb = k_mb * xi_mb[k];
        states[k].r_c = cu_rate_from_snr(s_mb, k_mn * xi_mn[k], k_nb * xi_nb[k], std::log1p(s_mb));
        states[k].r_d = std::log1p(k_nn * xi_nn[k]);
    }
    return states;
}

inline double policy_cu_rate_on(const std::vector<RateState>& states, const std::optional<ThresholdPolicy>& policy)
{
    double acc = 0.0;
    for (const auto& s : states) {
        acc += (policy ? 1.0 - policy->allocation(s) : 1.0) * s.r_c;
    }
    return acc / static_cast<double>(states.size());
}

} // namespace detail

inline PairModel build_pair_model(const Scenario& scn, const ScenarioConfig& cfg, std::uint64_t training_seed)
{
    const std::size_t cus = scn.cu_count();
    const std::size_t d2ds = scn.d2d_count();
    const std::size_t k_count = cfg.training_samples;
    const RadioParams& radio = cfg.radio;

    PairModel model;
    model.training_seed = training_seed;
    model.values = PayoffMatrix(cus, d2ds);
    model.policies.resize(cus * d2ds);
    model.policy_cu_rate.resize(cus * d2ds);
    model.relay_cu_rate.resize(cus * d2ds);
    model.direct_cu_rate.resize(cus);

    std::vector<std::vector<double>> s_mb(cus), direct(cus);
    for (std::size_t m = 0; m < cus; ++m) {
        const auto xi = training_fading(training_seed, Link::mb, m, 0, k_count);
        const double d = distance(scn.cu_positions[m], scn.bs);
        s_mb[m].resize(k_count);
        direct[m].resize(k_count);
        double acc = 0.0;
        for (std::size_t k = 0; k < k_count; ++k) {
            s_mb[m][k] = detail::snr(radio.p_c, d, radio.gamma, radio.n0, xi[k]);
            direct[m][k] = std::log1p(s_mb[m][k]);
            acc += direct[m][k];
        }
        model.direct_cu_rate[m] = acc / static_cast<double>(k_count);
    }
    std::vector<std::vector<double>> s_nb(d2ds), r_d(d2ds);
    for (std::size_t n = 0; n < d2ds; ++n) {
        const auto xi_nb = training_fading(training_seed, Link::nb, n, 0, k_count);
        const auto xi_nn = training_fading(training_seed, Link::nn, n, 0, k_count);
        const double d_nb = distance(scn.dt_positions[n], scn.bs);
        const double d_nn = distance(scn.dt_positions[n], scn.dr_positions[n]);
        s_nb[n].resize(k_count);
        r_d[n].resize(k_count);
        for (std::size_t k = 0; k < k_count; ++k) {
            s_nb[n][k] = detail::snr(radio.p_d, d_nb, radio.gamma, radio.n0, xi_nb[k]);
            r_d[n][k] = std::log1p(detail::snr(radio.p_d, d_nn, radio.gamma, radio.n0, xi_nn[k]));
        }
    }

    std::vector<RateState> states(k_count);
    std::vector<double> w(d2ds);
    for (std::size_t n = 0; n < d2ds; ++n) {
        w[n] = cfg.weight(n);
    }
    model.values.set_weights(w);
    for (std::size_t m = 0; m < cus; ++m) {
        for (std::size_t n = 0; n < d2ds; ++n) {
            const auto xi_mn = training_fading(training_seed, Link::mn, m, n, k_count);
            const double k_mn =
                radio.p_c * std::pow(distance(scn.cu_positions[m], scn.dt_positions[n]), -radio.gamma) / radio.n0;
            double relay = 0.0;
            for (std::size_t k = 0; k < k_count; ++k) {
                const double r_c = cu_rate_from_snr(s_mb[m][k], k_mn * xi_mn[k], s_nb[n][k], direct[m][k]);
                states[k] = {r_c, r_d[n][k]};
                relay += r_c;
            }
            EmpiricalStateSet set(states);
            const PairPayoff payoff = pair_payoff(set, cfg.r_th, w[n]);
            const std::size_t i = model.index(m, n);
            model.values(m, n) = payoff.v;
            model.policies[i] = payoff.policy;
            model.relay_cu_rate[i] = relay / static_cast<double>(k_count);
            model.policy_cu_rate[i] =
                payoff.policy ? evaluate_policy(set, *payoff.policy).cu_rate : model.relay_cu_rate[i];
        }
    }
    return model;
}

struct FrameMetrics {
    std::vector<double> d2d_rate;            // realized average per D2D pair
    std::vector<double> cu_rate;             // realized average per CU
    std::vector<double> cu_expected_rate;    // long-term rate of each CU under the pairing
    Matching matching;
    double weighted_sum_rate = 0.0;          // realized, sum_n w_n d2d_rate[n]
    double expected_wsr = 0.0;               // sum over matched feasible pairs of v_mn
    std::vector<std::uint8_t> outage;        // per CU
    double eau_cu = 0.0;
    double eau_d2d = 0.0;
    std::size_t matching_switch_count = 0;
    std::size_t csi_acquisition_count = 0;
    std::size_t subframes = 0;

    double outage_fraction() const
    {
        if (outage.empty()) {
            return 0.0;
        }
        return static_cast<double>(std::count(outage.begin(), outage.end(), 1)) / static_cast<double>(outage.size());
    }
};

/// Sum of prices and of D2D surpluses over matched members, each divided by
/// the matched count.
inline void fill_effective_utilities(const PayoffMatrix& values, const Matching& mu, FrameMetrics& fm)
{
    const std::size_t matched = mu.matched_count();
    if (matched == 0) {
        fm.eau_cu = fm.eau_d2d = 0.0;
        return;
    }
    double cu = 0.0, d2d = 0.0;
    for (std::size_t m = 0; m < mu.cu_count(); ++m) {
        if (mu.cu_partner[m] != kUnmatched) {
            cu += cu_utility(mu, m);
        }
    }
    for (std::size_t n = 0; n < mu.d2d_count(); ++n) {
        if (mu.d2d_partner[n] != kUnmatched) {
            d2d += d2d_utility(values, mu, n);
        }
    }
    fm.eau_cu = cu / static_cast<double>(matched);
    fm.eau_d2d = d2d / static_cast<double>(matched);
}

/// Plays one frame with the pairing `mu` fixed: every subframe each matched
/// pair applies its threshold policy to the fresh state, unmatched CUs
/// transmit directly, unmatched D2D pairs stay silent. A pair without a
/// feasible policy leaves the whole subframe to its CU.
inline FrameMetrics simulate_frame(const Scenario& scn, const ScenarioConfig& cfg, const PairModel& model,
                                   const Matching& mu, std::uint64_t fading_key)
{
    const std::size_t cus = scn.cu_count();
    const std::size_t d2ds = scn.d2d_count();
    const std::size_t t_count = cfg.subframes_per_frame;
    const RadioParams& radio = cfg.radio;
    const SubframeFading fading(fading_key);

    FrameMetrics fm;
    fm.matching = mu;
    fm.subframes = t_count;
    fm.d2d_rate.assign(d2ds, 0.0);
    fm.cu_rate.assign(cus, 0.0);
    fm.cu_expected_rate.assign(cus, 0.0);
    fm.outage.assign(cus, 0);

    for (std::size_t m = 0; m < cus; ++m) {
        const int partner = mu.cu_partner[m];
        const double k_mb = radio.p_c * std::pow(distance(scn.cu_positions[m], scn.bs), -radio.gamma) / radio.n0;
        if (partner == kUnmatched) {
            double acc = 0.0;
            for (std::size_t t = 0; t < t_count; ++t) {
                acc += std::log1p(k_mb * fading(t, Link::mb, m));
            }
            fm.cu_rate[m] = acc / static_cast<double>(t_count);
            fm.cu_expected_rate[m] = model.direct_cu_rate[m];
            continue;
        }
        const auto n = static_cast<std::size_t>(partner);
        const PairGeometry g = scn.geometry(m, n);
        const double k_mn = radio.p_c * std::pow(g.d_mn, -radio.gamma) / radio.n0;
        const double k_nb = radio.p_d * std::pow(g.d_nb, -radio.gamma) / radio.n0;
        const double k_nn = radio.p_d * std::pow(g.d_nn, -radio.gamma) / radio.n0;
        const auto& policy = model.policy(m, n);
        double cu_acc = 0.0, d2d_acc = 0.0;
        for (std::size_t t = 0; t < t_count; ++t) {
            const double s_mb = k_mb * fading(t, Link::mb, m);
            const double r_c = cu_rate_from_snr(s_mb, k_mn * fading(t, Link::mn, m, n),
                                                k_nb * fading(t, Link::nb, n), std::log1p(s_mb));
            if (!policy) {
                cu_acc += r_c;
                continue;
            }
            const RateState s{r_c, std::log1p(k_nn * fading(t, Link::nn, n))};
            const double a = policy->allocation(s);
            cu_acc += (1.0 - a) * s.r_c;
            d2d_acc += a * s.r_d;
        }
        fm.cu_rate[m] = cu_acc / static_cast<double>(t_count);
        fm.d2d_rate[n] = d2d_acc / static_cast<double>(t_count);
        fm.cu_expected_rate[m] = model.policy_cu_rate[model.index(m, n)];
        if (policy) {
            fm.expected_wsr += model.values(m, n);
        }
    }
    for (std::size_t n = 0; n < d2ds; ++n) {
        fm.weighted_sum_rate += cfg.weight(n) * fm.d2d_rate[n];
    }
    for (std::size_t m = 0; m < cus; ++m) {
        if (cfg.outage_basis == OutageBasis::realized) {
            fm.outage[m] = cfg.in_outage(fm.cu_rate[m]);
        }
        else {
            // The training-set rate of a binding policy equals r_th up to rounding.
            fm.outage[m] = cfg.in_outage(fm.cu_expected_rate[m] + 1e-9 * (1.0 + cfg.r_th));
        }
    }
    fill_effective_utilities(model.values, mu, fm);
    fm.csi_acquisition_count = mu.matched_count() * t_count;
    return fm;
}

/// One frame of the two-timescale scheme: statistical CSI, DMA pairing,
/// per-subframe threshold policies.
inline FrameMetrics run_frame_two_timescale(const Scenario& scn, const ScenarioConfig& cfg, Stream& stream)
{
    const std::uint64_t training_seed = stream();
    const std::uint64_t fading_key = stream();
    const std::uint64_t selector_seed = stream();
    const PairModel model = build_pair_model(scn, cfg, training_seed);
    const auto selector =
        cfg.random_selector ? ProposerSelector::seeded(selector_seed) : ProposerSelector::lowest_index();
    const DmaResult dma = run_dma(model.values, cfg.eps, selector);
    return simulate_frame(scn, cfg, model, dma.matching, fading_key);
}

// ---------------------------------------------------------------------------
// One-timescale benchmark

/// Best assignment reachable from `prev` by changing at most two matched
/// edges (each removal and each addition counts as one change). `value(m, n)`
/// is the instantaneous value of an edge; a kept edge contributes
/// max(value, 0), only edges with value > 0 are ever added. Returns the new
/// CU-side partner vector; `changes` receives the number of edge changes.
template <typename ValueFn>
std::vector<int> restricted_reassignment(std::size_t cus, std::size_t d2ds, const std::vector<int>& prev,
                                         ValueFn&& value, std::size_t& changes)
{
    std::vector<char> d2d_used(d2ds, 0);
    std::vector<std::size_t> free_cus, free_d2ds;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t m = 0; m < cus; ++m) {
        if (prev[m] == kUnmatched) {
            free_cus.push_back(m);
        }
        else {
            d2d_used[static_cast<std::size_t>(prev[m])] = 1;
            edges.emplace_back(m, static_cast<std::size_t>(prev[m]));
        }
    }
    for (std::size_t n = 0; n < d2ds; ++n) {
        if (!d2d_used[n]) {
            free_d2ds.push_back(n);
        }
    }
    auto kept = [&](std::size_t m, std::size_t n) { return std::max(value(m, n), 0.0); };

    constexpr double improve = 1e-12;
    double best_gain = 0.0;
    std::vector<int> best = prev;
    changes = 0;

    // One or two additions between free nodes.
    struct Cand {
        double v;
        std::size_t m, n;
    };
    std::vector<Cand> adds;
    for (std::size_t m : free_cus) {
        for (std::size_t n : free_d2ds) {
            const double v = value(m, n);
            if (v > 0.0) {
                adds.push_back({v, m, n});
            }
        }
    }
    std::sort(adds.begin(), adds.end(), [](const Cand& a, const Cand& b) {
        return a.v != b.v ? a.v > b.v : (a.m != b.m ? a.m < b.m : a.n < b.n);
    });
    if (!adds.empty() && adds[0].v > best_gain + improve) {
        best_gain = adds[0].v;
        best = prev;
        best[adds[0].m] = static_cast<int>(adds[0].n);
        changes = 1;
    }
    for (std::size_t i = 0; i < adds.size(); ++i) {
        if (i + 1 < adds.size() && adds[i].v + adds[i + 1].v <= best_gain + improve) {
            break;
        }
        for (std::size_t j = i + 1; j < adds.size(); ++j) {
            if (adds[i].v + adds[j].v <= best_gain + improve) {
                break;
            }
            if (adds[j].m != adds[i].m && adds[j].n != adds[i].n) {
                best_gain = adds[i].v + adds[j].v;
                best = prev;
                best[adds[i].m] = static_cast<int>(adds[i].n);
                best[adds[j].m] = static_cast<int>(adds[j].n);
                changes = 2;
                break;
            }
        }
    }

    // Replace one matched edge by a new edge using at least one freed node.
    for (const auto& [em, en] : edges) {
        const double loss = kept(em, en);
        auto consider = [&](std::size_t m, std::size_t n) {
            if (m == em && n == en) {
                return;
            }
            const double v = value(m, n);
            if (v > 0.0 && v - loss > best_gain + improve) {
                best_gain = v - loss;
                best = prev;
                best[em] = kUnmatched;
                best[m] = static_cast<int>(n);
                changes = 2;
            }
        };
        for (std::size_t n : free_d2ds) {
            consider(em, n);
        }
        for (std::size_t m : free_cus) {
            consider(m, en);
        }
    }
    return best;
}

/// Per-subframe CU -> DT instantaneous quantities of every pair.
struct InstantPair {
    double r_c = 0.0;
    double r_d = 0.0;
    double alpha = 0.0;   // D2D share that leaves the CU exactly r_th
    bool feasible = false;
};

inline InstantPair instant_pair(double r_c, double r_d, double r_th)
{
    InstantPair p{r_c, r_d, 0.0, false};
    if (r_c >= r_th && r_c > 0.0) {
        p.feasible = true;
        p.alpha = std::max(0.0, 1.0 - r_th / r_c);
    }
    else if (r_c >= r_th) {
        // r_th = 0 and r_c = 0: the whole subframe can go to D2D.
        p.feasible = true;
        p.alpha = 1.0;
    }
    return p;
}

inline FrameMetrics run_one_timescale_restricted(const Scenario& scn, const ScenarioConfig& cfg, Stream& stream)
{
    const std::uint64_t fading_key = stream();
    const SubframeFading fading(fading_key);
    const std::size_t cus = scn.cu_count();
    const std::size_t d2ds = scn.d2d_count();
    const std::size_t t_count = cfg.subframes_per_frame;
    const RadioParams& radio = cfg.radio;

    std::vector<double> k_mb(cus), k_nb(d2ds), k_nn(d2ds), k_mn(cus * d2ds);
    for (std::size_t m = 0; m < cus; ++m) {
        k_mb[m] = radio.p_c * std::pow(distance(scn.cu_positions[m], scn.bs), -radio.gamma) / radio.n0;
        for (std::size_t n = 0; n < d2ds; ++n) {
            k_mn[m * d2ds + n] =
                radio.p_c * std::pow(distance(scn.cu_positions[m], scn.dt_positions[n]), -radio.gamma) / radio.n0;
        }
    }
    for (std::size_t n = 0; n < d2ds; ++n) {
        k_nb[n] = radio.p_d * std::pow(distance(scn.dt_positions[n], scn.bs), -radio.gamma) / radio.n0;
        k_nn[n] = radio.p_d * std::pow(distance(scn.dt_positions[n], scn.dr_positions[n]), -radio.gamma) / radio.n0;
    }

    FrameMetrics fm;
    fm.subframes = t_count;
    fm.d2d_rate.assign(d2ds, 0.0);
    fm.cu_rate.assign(cus, 0.0);
    fm.cu_expected_rate.assign(cus, 0.0);
    fm.outage.assign(cus, 0);

    std::vector<InstantPair> inst(cus * d2ds);
    std::vector<double> s_mb(cus), direct(cus), s_nb(d2ds), r_d(d2ds);
    std::vector<int> partner(cus, kUnmatched);
    auto value = [&](std::size_t m, std::size_t n) {
        const InstantPair& p = inst[m * d2ds + n];
        return p.feasible ? cfg.weight(n) * p.alpha * p.r_d : -std::numeric_limits<double>::infinity();
    };

    for (std::size_t t = 0; t < t_count; ++t) {
        for (std::size_t m = 0; m < cus; ++m) {
            s_mb[m] = k_mb[m] * fading(t, Link::mb, m);
            direct[m] = std::log1p(s_mb[m]);
        }
        for (std::size_t n = 0; n < d2ds; ++n) {
            s_nb[n] = k_nb[n] * fading(t, Link::nb, n);
            r_d[n] = std::log1p(k_nn[n] * fading(t, Link::nn, n));
        }
        for (std::size_t m = 0; m < cus; ++m) {
            for (std::size_t n = 0; n < d2ds; ++n) {
                const double r_c =
                    cu_rate_from_snr(s_mb[m], k_mn[m * d2ds + n] * fading(t, Link::mn, m, n), s_nb[n], direct[m]);
                inst[m * d2ds + n] = instant_pair(r_c, r_d[n], cfg.r_th);
            }
        }

        if (t == 0) {
            partner = max_weight_assignment(cus, d2ds, value).cu_partner;
        }
        else {
            std::size_t changes = 0;
            partner = restricted_reassignment(cus, d2ds, partner, value, changes);
            fm.matching_switch_count += changes;
        }

        for (std::size_t m = 0; m < cus; ++m) {
            if (partner[m] == kUnmatched) {
                fm.cu_rate[m] += direct[m];
                continue;
            }
            const auto n = static_cast<std::size_t>(partner[m]);
            const InstantPair& p = inst[m * d2ds + n];
            if (p.feasible) {
                fm.cu_rate[m] += (1.0 - p.alpha) * p.r_c;
                fm.d2d_rate[n] += p.alpha * p.r_d;
            }
            else {
                fm.cu_rate[m] += p.r_c;
            }
        }
    }

    fm.matching = Matching::empty(cus, d2ds, cfg.eps);
    for (std::size_t m = 0; m < cus; ++m) {
        if (partner[m] != kUnmatched) {
            fm.matching.pair(m, static_cast<std::size_t>(partner[m]));
        }
    }
    for (std::size_t m = 0; m < cus; ++m) {
        fm.cu_rate[m] /= static_cast<double>(t_count);
        fm.cu_expected_rate[m] = fm.cu_rate[m];
        fm.outage[m] = cfg.in_outage(fm.cu_rate[m]);
    }
    for (std::size_t n = 0; n < d2ds; ++n) {
        fm.d2d_rate[n] /= static_cast<double>(t_count);
        fm.weighted_sum_rate += cfg.weight(n) * fm.d2d_rate[n];
    }
    fm.expected_wsr = fm.weighted_sum_rate;
    fm.csi_acquisition_count = cus * d2ds * t_count;
    return fm;
}

// ---------------------------------------------------------------------------
// Mobility

struct MobilityParams {
    double speed = 20.0;          // m/s
    double duration = 2.0;        // s
    double subframe_len = 1e-3;   // s
    double bucket_len = 0.5;      // s
    /// D2D transmitter and receiver share one heading (the link length stays
    /// fixed); otherwise every node draws its own heading.
    bool pairs_move_together = true;

    void validate() const
    {
        if (!(speed >= 0.0) || !std::isfinite(speed)) {
            throw ConfigError("mobility speed must be finite and >= 0");
        }
        if (!(subframe_len > 0.0) || !(bucket_len >= subframe_len) || !(duration >= bucket_len)) {
            throw ConfigError("mobility needs 0 < subframe_len <= bucket_len <= duration");
        }
    }
};

struct MobilityBucket {
    double t_start = 0.0;
    double weighted_sum_rate = 0.0;   // mean per-subframe realized D2D weighted sum rate
    double outage_fraction = 0.0;
    std::size_t subframes = 0;
};

namespace detail {

struct Walker {
    Position p;
    double dx = 0.0, dy = 0.0;   // unit heading
};

/// Advances by `step` metres and reflects specularly off the cell boundary.
inline void advance(Walker& w, double step, double radius)
{
    w.p.x += step * w.dx;
    w.p.y += step * w.dy;
    const double r = std::hypot(w.p.x, w.p.y);
    if (r > radius) {
        const double nx = w.p.x / r, ny = w.p.y / r;
        const double back = 2.0 * radius - r;
        w.p.x = nx * back;
        w.p.y = ny * back;
        const double dot = w.dx * nx + w.dy * ny;
        w.dx -= 2.0 * dot * nx;
        w.dy -= 2.0 * dot * ny;
    }
}

inline Walker start_walker(const Position& p, Stream& rng)
{
    const double a = 6.283185307179586 * uniform01(rng);
    return {p, std::cos(a), std::sin(a)};
}

} // namespace detail

/// Pairing and policies fixed at t = 0; users then walk straight lines at
/// `speed` and the fixed scheme is evaluated on the moving geometry.
inline std::vector<MobilityBucket> run_mobility(const Scenario& scn, const ScenarioConfig& cfg,
                                                const MobilityParams& mp, Stream& stream)
{
    mp.validate();
    const std::uint64_t training_seed = stream();
    const std::uint64_t fading_key = stream();
    const std::uint64_t selector_seed = stream();
    Stream heading_rng(stream());

    const std::size_t cus = scn.cu_count();
    const std::size_t d2ds = scn.d2d_count();
    const RadioParams& radio = cfg.radio;
    const PairModel model = build_pair_model(scn, cfg, training_seed);
    const auto selector =
        cfg.random_selector ? ProposerSelector::seeded(selector_seed) : ProposerSelector::lowest_index();
    const Matching mu = run_dma(model.values, cfg.eps, selector).matching;

    std::vector<detail::Walker> cu(cus), dt(d2ds), dr(d2ds);
    for (std::size_t m = 0; m < cus; ++m) {
        cu[m] = detail::start_walker(scn.cu_positions[m], heading_rng);
    }
    for (std::size_t n = 0; n < d2ds; ++n) {
        dt[n] = detail::start_walker(scn.dt_positions[n], heading_rng);
        dr[n] = detail::start_walker(scn.dr_positions[n], heading_rng);
        if (mp.pairs_move_together) {
            dr[n].dx = dt[n].dx;
            dr[n].dy = dt[n].dy;
        }
    }

    // Training draws of the matched pairs, reused to evaluate each CU's
    // long-term rate on the moved geometry.
    const std::size_t k_count = cfg.training_samples;
    struct Stored {
        std::vector<double> mb, mn, nb, nn;
    };
    std::vector<Stored> stored(cus);
    std::vector<double> xi_mb_unmatched;
    if (cfg.outage_basis == OutageBasis::expected) {
        for (std::size_t m = 0; m < cus; ++m) {
            stored[m].mb = training_fading(training_seed, Link::mb, m, 0, k_count);
            if (mu.cu_partner[m] != kUnmatched) {
                const auto n = static_cast<std::size_t>(mu.cu_partner[m]);
                stored[m].mn = training_fading(training_seed, Link::mn, m, n, k_count);
                stored[m].nb = training_fading(training_seed, Link::nb, n, 0, k_count);
                stored[m].nn = training_fading(training_seed, Link::nn, n, 0, k_count);
            }
        }
    }

    const double step = mp.speed * mp.subframe_len;
    const auto per_bucket = static_cast<std::size_t>(std::llround(mp.bucket_len / mp.subframe_len));
    const auto bucket_count = static_cast<std::size_t>(std::llround(mp.duration / mp.bucket_len));
    const SubframeFading fading(fading_key);
    std::vector<MobilityBucket> buckets(bucket_count);
    std::vector<double> cu_acc(cus);

    std::size_t t = 0;
    for (std::size_t b = 0; b < bucket_count; ++b) {
        MobilityBucket& bucket = buckets[b];
        bucket.t_start = static_cast<double>(b) * mp.bucket_len;
        bucket.subframes = per_bucket;
        std::fill(cu_acc.begin(), cu_acc.end(), 0.0);
        std::vector<std::uint8_t> outage(cus, 0);

        if (cfg.outage_basis == OutageBasis::expected) {
            for (std::size_t m = 0; m < cus; ++m) {
                double rate = 0.0;
                if (mu.cu_partner[m] == kUnmatched) {
                    const double k = radio.p_c * std::pow(distance(cu[m].p, scn.bs), -radio.gamma) / radio.n0;
                    for (double x : stored[m].mb) {
                        rate += std::log1p(k * x);
                    }
                    rate /= static_cast<double>(k_count);
                }
                else {
                    const auto n = static_cast<std::size_t>(mu.cu_partner[m]);
                    const PairGeometry g = PairGeometry::from_positions(scn.bs, cu[m].p, dt[n].p, dr[n].p);
                    const auto states =
                        detail::training_states(g, radio, stored[m].mb, stored[m].mn, stored[m].nb, stored[m].nn);
                    rate = detail::policy_cu_rate_on(states, model.policy(m, n));
                }
                outage[m] = cfg.in_outage(rate + 1e-9 * (1.0 + cfg.r_th));
            }
        }

        for (std::size_t i = 0; i < per_bucket; ++i, ++t) {
            double wsr = 0.0;
            for (std::size_t m = 0; m < cus; ++m) {
                const double s_mb = radio.p_c * fading(t, Link::mb, m) *
                                    std::pow(distance(cu[m].p, scn.bs), -radio.gamma) / radio.n0;
                const double direct = std::log1p(s_mb);
                if (mu.cu_partner[m] == kUnmatched) {
                    cu_acc[m] += direct;
                    continue;
                }
                const auto n = static_cast<std::size_t>(mu.cu_partner[m]);
                const PairGeometry g = PairGeometry::from_positions(scn.bs, cu[m].p, dt[n].p, dr[n].p);
                const double r_c = cu_rate_from_snr(
                    s_mb, radio.p_c * fading(t, Link::mn, m, n) * std::pow(g.d_mn, -radio.gamma) / radio.n0,
                    radio.p_d * fading(t, Link::nb, n) * std::pow(g.d_nb, -radio.gamma) / radio.n0, direct);
                const auto& policy = model.policy(m, n);
                if (!policy) {
                    cu_acc[m] += r_c;
                    continue;
                }
                const RateState s{
                    r_c, std::log1p(radio.p_d * fading(t, Link::nn, n) * std::pow(g.d_nn, -radio.gamma) / radio.n0)};
                const double a = policy->allocation(s);
                cu_acc[m] += (1.0 - a) * s.r_c;
                wsr += cfg.weight(n) * a * s.r_d;
            }
            bucket.weighted_sum_rate += wsr;

            for (auto& w : cu) {
                detail::advance(w, step, cfg.cell_radius);
            }
            for (std::size_t n = 0; n < d2ds; ++n) {
                detail::advance(dt[n], step, cfg.cell_radius);
                detail::advance(dr[n], step, cfg.cell_radius);
            }
        }
        bucket.weighted_sum_rate /= static_cast<double>(per_bucket);
        if (cfg.outage_basis == OutageBasis::realized) {
            for (std::size_t m = 0; m < cus; ++m) {
                outage[m] = cfg.in_outage(cu_acc[m] / static_cast<double>(per_bucket));
            }
        }
        bucket.outage_fraction =
            static_cast<double>(std::count(outage.begin(), outage.end(), 1)) / static_cast<double>(cus);
    }
    return buckets;
}

// ---------------------------------------------------------------------------
// Aggregation

struct Stat {
    double mean = 0.0;
    double stderr_ = 0.0;
};

/// Mean and standard error of the mean.
inline Stat mean_stderr(const std::vector<double>& x)
{
    if (x.empty()) {
        throw std::domain_error("mean_stderr: empty sample");
    }
    Stat s;
    for (double v : x) {
        s.mean += v;
    }
    s.mean /= static_cast<double>(x.size());
    if (x.size() > 1) {
        double ss = 0.0;
        for (double v : x) {
            ss += (v - s.mean) * (v - s.mean);
        }
        s.stderr_ = std::sqrt(ss / static_cast<double>(x.size() - 1) / static_cast<double>(x.size()));
    }
    return s;
}

struct MetricsSummary {
    std::size_t frames = 0;
    Stat weighted_sum_rate;
    Stat expected_wsr;
    Stat outage;   // fraction of CUs in outage
    Stat eau_cu;
    Stat eau_d2d;
    Stat switches;
    Stat csi;
};

inline MetricsSummary aggregate_metrics(const std::vector<FrameMetrics>& frames)
{
    if (frames.empty()) {
        throw std::domain_error("aggregate_metrics: no frames");
    }
    auto collect = [&](auto&& get) {
        std::vector<double> x;
        x.reserve(frames.size());
        for (const auto& f : frames) {
            x.push_back(static_cast<double>(get(f)));
        }
        return mean_stderr(x);
    };
    MetricsSummary s;
    s.frames = frames.size();
    s.weighted_sum_rate = collect([](const FrameMetrics& f) { return f.weighted_sum_rate; });
    s.expected_wsr = collect([](const FrameMetrics& f) { return f.expected_wsr; });
    s.outage = collect([](const FrameMetrics& f) { return f.outage_fraction(); });
    s.eau_cu = collect([](const FrameMetrics& f) { return f.eau_cu; });
    s.eau_d2d = collect([](const FrameMetrics& f) { return f.eau_d2d; });
    s.switches = collect([](const FrameMetrics& f) { return f.matching_switch_count; });
    s.csi = collect([](const FrameMetrics& f) { return f.csi_acquisition_count; });
    return s;
}

} // namespace d2dcoop
