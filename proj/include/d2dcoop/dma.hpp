#pragma once

// Distributed matching algorithm (DMA): an ascending-price auction in which
// unmatched D2D pairs propose to the CU maximizing v_mn - beta_m and CUs
// raise their price requirement by eps whenever they are contended.
// The result is an eps-stable matching whose prices are multiples of eps.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "d2dcoop/payoff.hpp"
#include "d2dcoop/random.hpp"

namespace d2dcoop {

/// D2D pair n's favourite CU under price requirements `beta`, or kUnmatched
/// when every surplus is negative. Ties go to the lowest CU index.
inline int demand(const PayoffMatrix& values, std::size_t n, std::span<const double> beta)
{
    int best = kUnmatched;
    double best_surplus = 0.0;
    for (std::size_t m = 0; m < values.cu_count(); ++m) {
        const double surplus = values(m, n) - beta[m];
        if (surplus >= 0.0 && (best == kUnmatched || surplus > best_surplus)) {
            best = static_cast<int>(m);
            best_surplus = surplus;
        }
    }
    return best;
}

/// Chooses which of several stale proposers an idle CU accepts.
class ProposerSelector {
public:
    static ProposerSelector lowest_index() { return ProposerSelector{}; }

    static ProposerSelector seeded(std::uint64_t seed)
    {
        ProposerSelector s;
        s.rng_.emplace(seed);
        return s;
    }

    bool is_random() const { return rng_.has_value(); }

    /// `candidates` is non-empty and sorted ascending.
    int pick(std::span<const int> candidates)
    {
        if (!rng_) {
            return candidates.front();
        }
        return candidates[uniform_index(*rng_, candidates.size())];
    }

    /// Orders the D2D pairs for sequential processing.
    void order(std::vector<int>& d2ds)
    {
        if (rng_) {
            shuffle(d2ds, *rng_);
        }
    }

private:
    std::optional<Stream> rng_;
};

struct DmaRound {
    std::vector<std::int64_t> beta_ticks;   // beta^t / eps, per CU
    std::vector<int> proposer_count;        // sum_n g^t_mn, per CU
};

struct DmaTrace {
    std::size_t iterations = 0;
    double eps = 1.0;
    std::vector<DmaRound> rounds;

    /// CSV with columns iteration,cu,beta,proposer_count (1-based indices).
    void write_csv(std::ostream& os) const
    {
        os << "iteration,cu,beta,proposer_count\n";
        for (std::size_t t = 0; t < rounds.size(); ++t) {
            const DmaRound& r = rounds[t];
            for (std::size_t m = 0; m < r.beta_ticks.size(); ++m) {
                os << (t + 1) << ',' << (m + 1) << ',' << static_cast<double>(r.beta_ticks[m]) * eps << ','
                   << r.proposer_count[m] << '\n';
            }
        }
    }
};

/// ceil(M N V_max / eps) + M N.
inline std::size_t dma_iteration_cap(std::size_t cu_count, std::size_t d2d_count, double v_max, double eps)
{
    const double mn = static_cast<double>(cu_count * d2d_count);
    const double steps = v_max > 0.0 ? std::ceil(mn * v_max / eps) : 0.0;
    return static_cast<std::size_t>(steps) + cu_count * d2d_count;
}

struct DmaResult {
    Matching matching;
    DmaTrace trace;
};

inline DmaResult run_dma(const PayoffMatrix& values, double eps,
                         ProposerSelector selector = ProposerSelector::lowest_index())
{
    if (!(eps > 0.0) || !std::isfinite(eps)) {
        throw std::domain_error("run_dma: eps must be > 0");
    }
    const std::size_t cus = values.cu_count();
    const std::size_t d2ds = values.d2d_count();

    DmaResult out{Matching::empty(cus, d2ds, eps), DmaTrace{}};
    out.trace.eps = eps;
    Matching& mu = out.matching;
    if (values.max_value() <= 0.0) {
        return out;
    }

    const std::size_t guard = 4 * dma_iteration_cap(cus, d2ds, values.max_value(), eps) + 16;

    std::vector<std::int64_t> beta(cus, 0);
    std::vector<double> beta_value(cus, 0.0);
    std::vector<std::vector<int>> proposals(cus), previous(cus);
    std::vector<int> target(d2ds, kUnmatched);

    for (std::size_t t = 1;; ++t) {
        if (t > guard) {
            throw std::runtime_error("run_dma: iteration guard exceeded");
        }
        out.trace.iterations = t;

        // D2D proposals.
        for (auto& p : proposals) {
            p.clear();
        }
        for (std::size_t m = 0; m < cus; ++m) {
            beta_value[m] = static_cast<double>(beta[m]) * eps;
        }
        for (std::size_t n = 0; n < d2ds; ++n) {
            target[n] = kUnmatched;
            if (mu.d2d_partner[n] == kUnmatched) {
                const int m = demand(values, n, beta_value);
                if (m != kUnmatched) {
                    proposals[static_cast<std::size_t>(m)].push_back(static_cast<int>(n));
                    target[n] = m;
                }
            }
        }
        DmaRound round{beta, std::vector<int>(cus, 0)};
        for (std::size_t m = 0; m < cus; ++m) {
            round.proposer_count[m] = static_cast<int>(proposals[m].size());
        }
        out.trace.rounds.push_back(std::move(round));

        // Case 1: an idle CU that was contended last round and is now silent
        // takes one of last round's proposers at last round's requirement.
        for (std::size_t m = 0; m < cus; ++m) {
            if (!proposals[m].empty() || previous[m].empty() || mu.cu_partner[m] != kUnmatched) {
                continue;
            }
            std::vector<int> candidates;
            for (int n : previous[m]) {
                if (mu.d2d_partner[static_cast<std::size_t>(n)] == kUnmatched) {
                    candidates.push_back(n);
                }
            }
            if (candidates.empty()) {
                continue;
            }
            std::sort(candidates.begin(), candidates.end());
            const int chosen = selector.pick(candidates);
            const auto n = static_cast<std::size_t>(chosen);
            mu.pair(m, n);
            mu.price_ticks[m] = beta[m] - 1;
            // Withdraw the chosen pair's fresh proposal.
            if (target[n] != kUnmatched) {
                auto& lst = proposals[static_cast<std::size_t>(target[n])];
                lst.erase(std::remove(lst.begin(), lst.end(), chosen), lst.end());
                target[n] = kUnmatched;
            }
        }

        bool any_proposal = false;
        for (std::size_t m = 0; m < cus; ++m) {
            any_proposal = any_proposal || !proposals[m].empty();
        }

        // Cases 2-4.
        for (std::size_t m = 0; m < cus; ++m) {
            const std::size_t count = proposals[m].size();
            if (count == 1 && (mu.cu_partner[m] == kUnmatched || mu.price_ticks[m] < beta[m])) {
                mu.pair(m, static_cast<std::size_t>(proposals[m].front()));
                mu.price_ticks[m] = beta[m];
            }
            else if (count >= 1) {
                const int incumbent = mu.cu_partner[m];
                const bool rearm = incumbent != kUnmatched && mu.price_ticks[m] == beta[m];
                mu.unpair_cu(m);
                mu.price_ticks[m] = 0;
                if (rearm) {
                    proposals[m].push_back(incumbent);
                }
                beta[m] += 1;
            }
        }

        std::swap(previous, proposals);
        if (!any_proposal) {
            break;
        }
    }

    for (std::size_t m = 0; m < cus; ++m) {
        if (mu.cu_partner[m] == kUnmatched) {
            mu.price_ticks[m] = 0;
        }
    }
    return out;
}

enum class StabilityCondition { cu_rationality, d2d_rationality, blocking_pair };

struct StabilityViolation {
    StabilityCondition condition;
    int cu = kUnmatched;
    int d2d = kUnmatched;
    double shortfall = 0.0;
};

struct StabilityReport {
    bool stable = true;
    std::vector<StabilityViolation> violations;
};

/// Rounding slack for the comparisons below; prices are exact multiples of
/// eps, so only the final subtraction can round.
inline constexpr double kStabilitySlack = 1e-9;

/// Individual rationality (theta, delta >= 0) and theta_m + delta_n >= v_mn - eps
/// for every pair.
inline StabilityReport verify_eps_stable(const PayoffMatrix& values, const Matching& mu, double eps)
{
    StabilityReport report;
    const auto add = [&](StabilityCondition c, int m, int n, double shortfall) {
        report.stable = false;
        report.violations.push_back({c, m, n, shortfall});
    };
    const std::size_t cus = values.cu_count();
    const std::size_t d2ds = values.d2d_count();
    std::vector<double> theta(cus), delta(d2ds);
    for (std::size_t m = 0; m < cus; ++m) {
        theta[m] = cu_utility(mu, m);
        if (theta[m] < -kStabilitySlack) {
            add(StabilityCondition::cu_rationality, static_cast<int>(m), kUnmatched, -theta[m]);
        }
    }
    for (std::size_t n = 0; n < d2ds; ++n) {
        delta[n] = d2d_utility(values, mu, n);
        if (delta[n] < -kStabilitySlack) {
            add(StabilityCondition::d2d_rationality, kUnmatched, static_cast<int>(n), -delta[n]);
        }
    }
    for (std::size_t m = 0; m < cus; ++m) {
        for (std::size_t n = 0; n < d2ds; ++n) {
            const double shortfall = (values(m, n) - eps) - (theta[m] + delta[n]);
            if (shortfall > kStabilitySlack * (1.0 + std::abs(values(m, n)))) {
                add(StabilityCondition::blocking_pair, static_cast<int>(m), static_cast<int>(n), shortfall);
            }
        }
    }
    return report;
}

inline std::string to_string(StabilityCondition c)
{
    switch (c) {
    case StabilityCondition::cu_rationality:
        return "cu_rationality";
    case StabilityCondition::d2d_rationality:
        return "d2d_rationality";
    case StabilityCondition::blocking_pair:
        return "blocking_pair";
    }
    return "unknown";
}

} // namespace d2dcoop
