#pragma once

// Pairing layer: DMA, exact optimum, the two comparison baselines, and the
// robustness measures built on them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "d2dcoop/assignment.hpp"
#include "d2dcoop/dma.hpp"
#include "d2dcoop/payoff.hpp"
#include "d2dcoop/random.hpp"

namespace d2dcoop {

/// Deferred acceptance with all prices pinned at zero. Each unmatched D2D
/// pair proposes to its best acceptable CU that has not refused it; a free
/// CU accepts the first proposal it receives and refuses every later one.
/// Within a round, pairs propose in index order, or in a shuffled order when
/// the selector is seeded.
inline Matching matching_without_transfer(const PayoffMatrix& values,
                                          ProposerSelector selector = ProposerSelector::lowest_index())
{
    const std::size_t cus = values.cu_count();
    const std::size_t d2ds = values.d2d_count();
    Matching mu = Matching::empty(cus, d2ds, 1.0);
    std::vector<std::vector<char>> refused(d2ds, std::vector<char>(cus, 0));
    std::vector<char> exhausted(d2ds, 0);

    for (;;) {
        std::vector<int> active;
        for (std::size_t n = 0; n < d2ds; ++n) {
            if (mu.d2d_partner[n] == kUnmatched && !exhausted[n]) {
                active.push_back(static_cast<int>(n));
            }
        }
        if (active.empty()) {
            break;
        }
        selector.order(active);
        for (int ni : active) {
            const auto n = static_cast<std::size_t>(ni);
            int best = kUnmatched;
            for (std::size_t m = 0; m < cus; ++m) {
                if (refused[n][m] || values(m, n) < 0.0) {
                    continue;
                }
                if (best == kUnmatched || values(m, n) > values(static_cast<std::size_t>(best), n)) {
                    best = static_cast<int>(m);
                }
            }
            if (best == kUnmatched) {
                exhausted[n] = 1;
                continue;
            }
            const auto m = static_cast<std::size_t>(best);
            if (mu.cu_partner[m] == kUnmatched) {
                mu.pair(m, n);
            }
            else {
                refused[n][m] = 1;
            }
        }
    }
    return mu;
}

/// Uniformly random pairing of min{M, N} pairs, ignoring values.
inline Matching random_matching(const PayoffMatrix& values, Stream& rng)
{
    const std::size_t cus = values.cu_count();
    const std::size_t d2ds = values.d2d_count();
    Matching mu = Matching::empty(cus, d2ds, 1.0);
    if (cus <= d2ds) {
        std::vector<std::size_t> perm(d2ds);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        shuffle(perm, rng);
        for (std::size_t m = 0; m < cus; ++m) {
            mu.pair(m, perm[m]);
        }
    }
    else {
        std::vector<std::size_t> perm(cus);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        shuffle(perm, rng);
        for (std::size_t n = 0; n < d2ds; ++n) {
            mu.pair(perm[n], n);
        }
    }
    return mu;
}

/// Utility gain (measured with the true values) that D2D pair n obtains by
/// announcing `fake_values` instead of its true value vector.
inline double deviation_gain(const PayoffMatrix& values, std::size_t n, const std::vector<double>& fake_values,
                             double eps, const ProposerSelector& selector = ProposerSelector::lowest_index())
{
    if (n >= values.d2d_count()) {
        throw std::out_of_range("deviation_gain: D2D index out of range");
    }
    PayoffMatrix announced = values;
    announced.set_value_vector(n, fake_values);
    const Matching truthful = run_dma(values, eps, selector).matching;
    const Matching deviated = run_dma(announced, eps, selector).matching;
    return d2d_utility(values, deviated, n) - d2d_utility(values, truthful, n);
}

/// Upper bound on deviation_gain: (8 min{M,N} + 1) eps.
inline double deviation_bound(std::size_t cu_count, std::size_t d2d_count, double eps)
{
    return (8.0 * static_cast<double>(std::min(cu_count, d2d_count)) + 1.0) * eps;
}

/// |V(M, N) - V(M, N \ {n}) - delta_n|.
inline double marginal_gap(const PayoffMatrix& values, const Matching& mu, std::size_t n)
{
    const std::vector<bool> all_cus(values.cu_count(), true);
    std::vector<bool> d2ds(values.d2d_count(), true);
    const double full = optimal_value(values, all_cus, d2ds);
    d2ds[n] = false;
    const double without = optimal_value(values, all_cus, d2ds);
    return std::abs(full - without - d2d_utility(values, mu, n));
}

/// Same statistic for every D2D pair, sharing the full-market optimum.
inline std::vector<double> marginal_gaps(const PayoffMatrix& values, const Matching& mu)
{
    const std::vector<bool> all_cus(values.cu_count(), true);
    std::vector<bool> d2ds(values.d2d_count(), true);
    const double full = optimal_value(values, all_cus, d2ds);
    std::vector<double> out(values.d2d_count());
    for (std::size_t n = 0; n < values.d2d_count(); ++n) {
        d2ds[n] = false;
        out[n] = std::abs(full - optimal_value(values, all_cus, d2ds) - d2d_utility(values, mu, n));
        d2ds[n] = true;
    }
    return out;
}

/// Largest marginal gap allowed for a DMA outcome:
/// max(4 C1, C1 + C2 + 1) eps with C1 = min{M, N-1}, C2 = min{M, N}.
inline double marginal_gap_bound(std::size_t cu_count, std::size_t d2d_count, double eps)
{
    const double c1 = static_cast<double>(std::min(cu_count, d2d_count - 1));
    const double c2 = static_cast<double>(std::min(cu_count, d2d_count));
    return std::max(4.0 * c1, c1 + c2 + 1.0) * eps;
}

struct PriceInterval {
    double lower = 0.0;
    double upper = 0.0;
};

/// Interval that the price of CU m matched with D2D pair n must lie in:
/// base = V(M, N\{n}) - V(M\{m}, N\{n}); [base - (4C1+C2) eps, base + (C1+C2+1) eps].
inline PriceInterval price_interval(const PayoffMatrix& values, std::size_t m, std::size_t n, double eps)
{
    std::vector<bool> cus(values.cu_count(), true);
    std::vector<bool> d2ds(values.d2d_count(), true);
    d2ds[n] = false;
    const double without_n = optimal_value(values, cus, d2ds);
    cus[m] = false;
    const double without_both = optimal_value(values, cus, d2ds);
    const double base = without_n - without_both;
    const double c1 = static_cast<double>(std::min(values.cu_count(), values.d2d_count() - 1));
    const double c2 = static_cast<double>(std::min(values.cu_count(), values.d2d_count()));
    return {base - (4.0 * c1 + c2) * eps, base + (c1 + c2 + 1.0) * eps};
}

} // namespace d2dcoop
