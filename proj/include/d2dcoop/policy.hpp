#pragma once

// Short-timescale cooperation policy for one CU / D2D pair.
//
// The policy maximizes the expected D2D rate E{a(r) r_d} subject to the CU
// keeping E{(1-a(r)) r_c} >= r_th. The optimum is a threshold rule in the
// ratio r_d / r_c: the whole subframe goes to the D2D link when
// lambda* r_c < r_d, to the CU when lambda* r_c > r_d, and states exactly on
// the threshold are split so that the CU constraint binds.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "d2dcoop/chanmodel.hpp"

namespace d2dcoop {

/// Relative tolerance used to decide that a state lies on the threshold.
inline constexpr double kTieTolerance = 1e-12;

enum class PolicySide { cellular, tie, d2d };

/// Which branch of the threshold rule applies to `s` at threshold `lambda`.
/// States with r_c = r_d = 0 are left to the CU; states with only r_c = 0
/// always go to the D2D link.
inline PolicySide classify_state(double lambda, const RateState& s)
{
    if (s.r_c == 0.0) {
        return s.r_d > 0.0 ? PolicySide::d2d : PolicySide::cellular;
    }
    const double lhs = lambda * s.r_c;
    const double diff = lhs - s.r_d;
    const double scale = std::max(lhs, s.r_d);
    if (std::abs(diff) <= kTieTolerance * scale) {
        return PolicySide::tie;
    }
    return diff > 0.0 ? PolicySide::cellular : PolicySide::d2d;
}

struct ThresholdPolicy {
    double lambda_star = 0.0;
    /// D2D time share on states lying on the threshold.
    double alpha_tie = 0.0;

    /// Time-allocation factor (D2D share of the subframe) for one state.
    double allocation(const RateState& s) const
    {
        switch (classify_state(lambda_star, s)) {
        case PolicySide::cellular:
            return 0.0;
        case PolicySide::tie:
            return alpha_tie;
        case PolicySide::d2d:
            return 1.0;
        }
        return 0.0;
    }
};

struct PolicyOutcome {
    double d2d_rate = 0.0;
    double cu_rate = 0.0;
    bool feasible = false;
};

enum class SolveMethod { exact, bisection };

/// E{ r_c I(lambda r_c >= r_d) }; threshold ties count as covered.
inline double coverage_value(const EmpiricalStateSet& states, double lambda)
{
    if (!(lambda >= 0.0)) {
        throw std::domain_error("coverage_value: lambda must be >= 0");
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < states.size(); ++k) {
        if (classify_state(lambda, states.state(k)) != PolicySide::d2d) {
            acc += states.weight(k) * states.state(k).r_c;
        }
    }
    return acc;
}

inline PolicyOutcome evaluate_policy(const EmpiricalStateSet& states, const ThresholdPolicy& policy)
{
    PolicyOutcome out;
    out.feasible = true;
    for (std::size_t k = 0; k < states.size(); ++k) {
        const RateState& s = states.state(k);
        const double a = policy.allocation(s);
        out.d2d_rate += states.weight(k) * a * s.r_d;
        out.cu_rate += states.weight(k) * (1.0 - a) * s.r_c;
    }
    return out;
}

namespace detail {

/// D2D share on threshold states that makes the CU constraint bind.
inline double binding_tie_share(const EmpiricalStateSet& states, double lambda, double r_th)
{
    double above = 0.0;
    double tie = 0.0;
    for (std::size_t k = 0; k < states.size(); ++k) {
        const double mass = states.weight(k) * states.state(k).r_c;
        switch (classify_state(lambda, states.state(k))) {
        case PolicySide::cellular:
            above += mass;
            break;
        case PolicySide::tie:
            tie += mass;
            break;
        case PolicySide::d2d:
            break;
        }
    }
    if (!(tie > 0.0)) {
        return 1.0;
    }
    return std::clamp(1.0 - (r_th - above) / tie, 0.0, 1.0);
}

inline double exact_threshold(const EmpiricalStateSet& states, double r_th)
{
    struct Entry {
        double ratio;
        double mass;
    };
    std::vector<Entry> entries;
    entries.reserve(states.size());
    for (std::size_t k = 0; k < states.size(); ++k) {
        const RateState& s = states.state(k);
        if (s.r_c > 0.0) {
            entries.push_back({s.r_d / s.r_c, states.weight(k) * s.r_c});
        }
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.ratio < b.ratio; });

    double cum = 0.0;
    double lambda = entries.empty() ? 0.0 : entries.back().ratio;
    std::size_t i = 0;
    while (i < entries.size()) {
        const double group_ratio = entries[i].ratio;
        const double limit = group_ratio + kTieTolerance * group_ratio;
        while (i < entries.size() && entries[i].ratio <= limit) {
            cum += entries[i].mass;
            ++i;
        }
        if (cum >= r_th) {
            lambda = group_ratio;
            break;
        }
    }
    return lambda;
}

inline double bisection_threshold(const EmpiricalStateSet& states, double r_th, double eps0)
{
    double max_ratio = 0.0;
    for (const auto& s : states.states()) {
        if (s.r_c > 0.0) {
            max_ratio = std::max(max_ratio, s.r_d / s.r_c);
        }
    }
    double upper = max_ratio + 1.0;
    double lower = 0.0;
    double mid = 0.5 * (upper + lower);
    while (std::abs(upper - lower) > eps0) {
        mid = 0.5 * (upper + lower);
        if (coverage_value(states, mid) <= r_th) {
            lower = mid;
        }
        else {
            upper = mid;
        }
    }

    // The bracket [lower, upper] contains the minimal covering threshold,
    // which is always one of the state ratios. Snap to it so that the tie
    // share is well defined: candidates are the largest ratio <= lower and
    // every ratio inside (lower, upper].
    std::vector<double> candidates;
    double below = -1.0;
    for (const auto& s : states.states()) {
        if (!(s.r_c > 0.0)) {
            continue;
        }
        const double ratio = s.r_d / s.r_c;
        if (ratio <= lower) {
            below = std::max(below, ratio);
        }
        else if (ratio <= upper) {
            candidates.push_back(ratio);
        }
    }
    if (below >= 0.0) {
        candidates.push_back(below);
    }
    std::sort(candidates.begin(), candidates.end());
    for (double c : candidates) {
        if (coverage_value(states, c) >= r_th) {
            return c;
        }
    }
    return upper;
}

} // namespace detail

/// Optimal threshold policy, or nullopt when even giving every subframe to
/// the CU cannot reach r_th.
inline std::optional<ThresholdPolicy> solve_policy(const EmpiricalStateSet& states, double r_th,
                                                   SolveMethod method = SolveMethod::exact, double eps0 = 1e-9)
{
    if (!(r_th >= 0.0)) {
        throw std::domain_error("solve_policy: r_th must be >= 0");
    }
    if (!(eps0 > 0.0)) {
        throw std::domain_error("solve_policy: eps0 must be > 0");
    }
    if (states.mean_cu_rate() < r_th) {
        return std::nullopt;
    }
    double lambda = 0.0;
    if (r_th > 0.0) {
        lambda = method == SolveMethod::exact ? detail::exact_threshold(states, r_th)
                                              : detail::bisection_threshold(states, r_th, eps0);
    }
    return ThresholdPolicy{lambda, detail::binding_tie_share(states, lambda, r_th)};
}

struct PairPayoff {
    double u = -1.0;   // long-term D2D rate, -1 when infeasible
    double v = -1.0;   // w * u
    std::optional<ThresholdPolicy> policy;
    bool feasible() const { return policy.has_value(); }
};

inline PairPayoff pair_payoff(const EmpiricalStateSet& states, double r_th, double weight,
                              SolveMethod method = SolveMethod::exact)
{
    if (!(weight > 0.0)) {
        throw std::domain_error("pair_payoff: weight must be > 0");
    }
    PairPayoff out;
    out.policy = solve_policy(states, r_th, method);
    out.u = out.policy ? evaluate_policy(states, *out.policy).d2d_rate : -1.0;
    out.v = weight * out.u;
    return out;
}

/// Sufficient condition under which the threshold policy also maximizes
/// E{a r_d + eta (1-a) r_c}: Pr{r_d > eta r_c} > 1 - r_th^2 / E{r_c^2}.
inline bool weighted_sum_condition(const EmpiricalStateSet& states, double eta, double r_th)
{
    if (!(eta >= 0.0)) {
        throw std::domain_error("weighted_sum_condition: eta must be >= 0");
    }
    double prob = 0.0;
    double second_moment = 0.0;
    for (std::size_t k = 0; k < states.size(); ++k) {
        const RateState& s = states.state(k);
        if (s.r_d > eta * s.r_c) {
            prob += states.weight(k);
        }
        second_moment += states.weight(k) * s.r_c * s.r_c;
    }
    double rhs = 1.0;
    if (r_th > 0.0) {
        rhs = second_moment > 0.0 ? 1.0 - r_th * r_th / second_moment : -std::numeric_limits<double>::infinity();
    }
    return prob > rhs;
}

} // namespace d2dcoop
