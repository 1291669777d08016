#pragma once

// Link gains and per-subframe achievable rates for a CU / D2D pair.
//
// Rates are in nats/s/Hz (natural logarithm). A cooperating pair splits each
// subframe into two relay phases of length (1-a)/2 and a D2D phase of
// length a; r_c is the best rate the CU can get from the whole subframe
// (direct or decode-and-forward through the DT) and r_d the D2D link rate.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "d2dcoop/random.hpp"

namespace d2dcoop {

struct Position {
    double x = 0.0;
    double y = 0.0;
};

inline double distance(const Position& a, const Position& b)
{
    return std::hypot(a.x - b.x, a.y - b.y);
}

struct RadioParams {
    double p_c = 0.02;    // CU transmit power [W]
    double p_d = 0.02;    // DT transmit power [W]
    double n0 = 1e-13;    // noise power [W]
    double gamma = 4.0;   // pathloss exponent

    void validate() const
    {
        if (!(p_c > 0.0) || !(p_d > 0.0) || !(n0 > 0.0) || !std::isfinite(p_c) || !std::isfinite(p_d) ||
            !std::isfinite(n0)) {
            throw std::invalid_argument("RadioParams: powers and noise must be finite and > 0");
        }
        if (!(gamma >= 2.0) || !std::isfinite(gamma)) {
            throw std::invalid_argument("RadioParams: pathloss exponent must be >= 2");
        }
    }
};

inline double dbm_to_watts(double dbm)
{
    return std::pow(10.0, (dbm - 30.0) / 10.0);
}

/// Converts a bits/s/Hz figure to nats/s/Hz.
inline double bps_to_nats(double bps)
{
    return bps * std::log(2.0);
}

/// Instantaneous linear gains of the four links involved in pairing CU m
/// with D2D pair n.
struct PairGains {
    double h_mb = 0.0;   // CU -> BS
    double h_mn = 0.0;   // CU -> DT
    double h_nb = 0.0;   // DT -> BS
    double h_nn = 0.0;   // DT -> DR
};

struct RateState {
    double r_c = 0.0;
    double r_d = 0.0;

    friend bool operator==(const RateState&, const RateState&) = default;
};

/// h = xi * L^-gamma.
inline double link_gain(double distance_m, double gamma, double fading)
{
    if (!(distance_m > 0.0)) {
        throw std::domain_error("link_gain: distance must be > 0");
    }
    if (!(fading >= 0.0)) {
        throw std::domain_error("link_gain: fading must be >= 0");
    }
    return fading * std::pow(distance_m, -gamma);
}

/// max{ ln(1+s_mb), 1/2 min[ ln(1+s_mn), ln(1+s_mb+s_nb) ] } from linear SNRs.
///
/// The min and the max are resolved before taking logarithms, so at most one
/// log is evaluated beyond ln(1+s_mb) (which callers may pass precomputed).
inline double cu_rate_from_snr(double s_mb, double s_mn, double s_nb, double direct_rate)
{
    const double relay_arg = std::min(s_mn, s_mb + s_nb);
    // 1/2 ln(1+x) > ln(1+s_mb)  <=>  1+x > (1+s_mb)^2
    const double direct_sq = (1.0 + s_mb) * (1.0 + s_mb);
    if (1.0 + relay_arg > direct_sq) {
        return 0.5 * std::log1p(relay_arg);
    }
    return direct_rate;
}

inline RateState instantaneous_rates(const PairGains& g, const RadioParams& radio)
{
    const double s_mb = radio.p_c * g.h_mb / radio.n0;
    const double s_mn = radio.p_c * g.h_mn / radio.n0;
    const double s_nb = radio.p_d * g.h_nb / radio.n0;
    const double s_nn = radio.p_d * g.h_nn / radio.n0;
    const double direct = std::log1p(s_mb);
    const double relay = 0.5 * std::min(std::log1p(s_mn), std::log1p(s_mb + s_nb));
    return {std::max(direct, relay), std::log1p(s_nn)};
}

/// Distances for the four links of one CU / D2D pairing.
struct PairGeometry {
    double d_mb = 0.0;
    double d_mn = 0.0;
    double d_nb = 0.0;
    double d_nn = 0.0;

    static PairGeometry from_positions(const Position& bs, const Position& cu, const Position& dt,
                                       const Position& dr)
    {
        return {distance(cu, bs), distance(cu, dt), distance(dt, bs), distance(dt, dr)};
    }
};

/// Weighted sample of rate states standing in for the per-subframe state
/// distribution of one pair.
class EmpiricalStateSet {
public:
    EmpiricalStateSet() = default;

    /// Uniform weights 1/K.
    explicit EmpiricalStateSet(std::vector<RateState> states)
        : states_(std::move(states))
    {
        if (states_.empty()) {
            throw std::domain_error("EmpiricalStateSet: at least one state required");
        }
        weights_.assign(states_.size(), 1.0 / static_cast<double>(states_.size()));
        check_states();
    }

    EmpiricalStateSet(std::vector<RateState> states, std::vector<double> weights)
        : states_(std::move(states))
        , weights_(std::move(weights))
    {
        if (states_.empty()) {
            throw std::domain_error("EmpiricalStateSet: at least one state required");
        }
        if (weights_.size() != states_.size()) {
            throw std::invalid_argument("EmpiricalStateSet: weight count differs from state count");
        }
        double total = 0.0;
        for (double w : weights_) {
            if (!(w > 0.0) || !std::isfinite(w)) {
                throw std::invalid_argument("EmpiricalStateSet: weights must be finite and > 0");
            }
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-12) {
            throw std::invalid_argument("EmpiricalStateSet: weights must sum to 1");
        }
        check_states();
    }

    std::size_t size() const { return states_.size(); }
    const std::vector<RateState>& states() const { return states_; }
    const std::vector<double>& weights() const { return weights_; }
    const RateState& state(std::size_t k) const { return states_[k]; }
    double weight(std::size_t k) const { return weights_[k]; }

    /// E{r_c}.
    double mean_cu_rate() const
    {
        double acc = 0.0;
        for (std::size_t k = 0; k < states_.size(); ++k) {
            acc += weights_[k] * states_[k].r_c;
        }
        return acc;
    }

    double mean_d2d_rate() const
    {
        double acc = 0.0;
        for (std::size_t k = 0; k < states_.size(); ++k) {
            acc += weights_[k] * states_[k].r_d;
        }
        return acc;
    }

private:
    void check_states() const
    {
        for (const auto& s : states_) {
            if (!(s.r_c >= 0.0) || !(s.r_d >= 0.0) || !std::isfinite(s.r_c) || !std::isfinite(s.r_d)) {
                throw std::invalid_argument("EmpiricalStateSet: rates must be finite and >= 0");
            }
        }
    }

    std::vector<RateState> states_;
    std::vector<double> weights_;
};

/// K i.i.d. subframe states of one pair. `fading` is called once per link per
/// draw in the order (mb, mn, nb, nn) and must return a linear gain >= 0.
template <typename FadingSource>
EmpiricalStateSet sample_state_set(const PairGeometry& geom, const RadioParams& radio, std::size_t count,
                                   FadingSource&& fading)
{
    if (count == 0) {
        throw std::domain_error("sample_state_set: count must be >= 1");
    }
    radio.validate();
    const double pl_mb = link_gain(geom.d_mb, radio.gamma, 1.0);
    const double pl_mn = link_gain(geom.d_mn, radio.gamma, 1.0);
    const double pl_nb = link_gain(geom.d_nb, radio.gamma, 1.0);
    const double pl_nn = link_gain(geom.d_nn, radio.gamma, 1.0);

    std::vector<RateState> states;
    states.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        PairGains g;
        g.h_mb = pl_mb * fading();
        g.h_mn = pl_mn * fading();
        g.h_nb = pl_nb * fading();
        g.h_nn = pl_nn * fading();
        states.push_back(instantaneous_rates(g, radio));
    }
    return EmpiricalStateSet(std::move(states));
}

/// Unit-mean exponential (Rayleigh power) fading drawn from `rng`.
inline EmpiricalStateSet sample_state_set(const PairGeometry& geom, const RadioParams& radio, std::size_t count,
                                          Stream& rng)
{
    return sample_state_set(geom, radio, count, [&rng] { return exponential1(rng); });
}

} // namespace d2dcoop
