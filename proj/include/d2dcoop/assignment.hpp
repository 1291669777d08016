#pragma once

// Maximum-weight one-to-one partial assignment (Hungarian method with
// potentials, O(S^3) for S = max(M, N)). Pairs with negative value are never
// kept, so the result is the optimum over partial assignments.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "d2dcoop/payoff.hpp"

namespace d2dcoop {

struct Assignment {
    std::vector<int> cu_partner;   // D2D index or kUnmatched
    double value = 0.0;
};

/// `value(m, n)` may return -infinity for pairs that must never be used.
template <typename ValueFn>
Assignment max_weight_assignment(std::size_t cu_count, std::size_t d2d_count, ValueFn&& value)
{
    Assignment out;
    out.cu_partner.assign(cu_count, kUnmatched);
    if (cu_count == 0 || d2d_count == 0) {
        return out;
    }
    const std::size_t size = std::max(cu_count, d2d_count);
    std::vector<double> cost(size * size, 0.0);
    for (std::size_t m = 0; m < cu_count; ++m) {
        for (std::size_t n = 0; n < d2d_count; ++n) {
            const double v = value(m, n);
            cost[m * size + n] = v > 0.0 ? -v : 0.0;
        }
    }

    // Rows and columns are 1-based inside the solver; column 0 is the
    // virtual start of each augmenting path.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> row_pot(size + 1, 0.0), col_pot(size + 1, 0.0);
    std::vector<std::size_t> col_row(size + 1, 0), way(size + 1, 0);
    std::vector<double> min_slack(size + 1);
    std::vector<char> used(size + 1);
    for (std::size_t i = 1; i <= size; ++i) {
        col_row[0] = i;
        std::size_t j0 = 0;
        std::fill(min_slack.begin(), min_slack.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = col_row[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= size; ++j) {
                if (used[j]) {
                    continue;
                }
                const double cur = cost[(i0 - 1) * size + (j - 1)] - row_pot[i0] - col_pot[j];
                if (cur < min_slack[j]) {
                    min_slack[j] = cur;
                    way[j] = j0;
                }
                if (min_slack[j] < delta) {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= size; ++j) {
                if (used[j]) {
                    row_pot[col_row[j]] += delta;
                    col_pot[j] -= delta;
                }
                else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
        } while (col_row[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    for (std::size_t j = 1; j <= size; ++j) {
        const std::size_t m = col_row[j] - 1;
        const std::size_t n = j - 1;
        if (m < cu_count && n < d2d_count) {
            const double v = value(m, n);
            if (v > 0.0) {
                out.cu_partner[m] = static_cast<int>(n);
                out.value += v;
            }
        }
    }
    return out;
}

inline Assignment optimal_assignment(const PayoffMatrix& values)
{
    return max_weight_assignment(values.cu_count(), values.d2d_count(),
                                 [&](std::size_t m, std::size_t n) { return values(m, n); });
}

/// Optimal value restricted to the active CUs and D2D pairs; V(M1, N1).
inline double optimal_value(const PayoffMatrix& values, const std::vector<bool>& cu_active,
                            const std::vector<bool>& d2d_active)
{
    std::vector<std::size_t> cus, d2ds;
    for (std::size_t m = 0; m < values.cu_count(); ++m) {
        if (cu_active[m]) {
            cus.push_back(m);
        }
    }
    for (std::size_t n = 0; n < values.d2d_count(); ++n) {
        if (d2d_active[n]) {
            d2ds.push_back(n);
        }
    }
    return max_weight_assignment(cus.size(), d2ds.size(),
                                 [&](std::size_t i, std::size_t j) { return values(cus[i], d2ds[j]); })
        .value;
}

/// Price-free matching induced by an assignment.
inline Matching to_matching(const Assignment& a, std::size_t d2d_count, double eps = 1.0)
{
    Matching mu = Matching::empty(a.cu_partner.size(), d2d_count, eps);
    for (std::size_t m = 0; m < a.cu_partner.size(); ++m) {
        if (a.cu_partner[m] != kUnmatched) {
            mu.pair(m, static_cast<std::size_t>(a.cu_partner[m]));
        }
    }
    return mu;
}

} // namespace d2dcoop
