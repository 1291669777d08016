#include <gtest/gtest.h>

#include <map>

#include "d2dcoop/matching.hpp"
#include "test_support.hpp"

using namespace d2dcoop;
using d2dcoop::testing::random_payoff_matrix;

TEST(MatchingWithoutTransfer, FirstProposerWins)
{
    const PayoffMatrix v{{5, 3}};
    const Matching mu = matching_without_transfer(v);
    EXPECT_EQ(mu.cu_partner[0], 0);
    EXPECT_EQ(mu.price(0), 0.0);
    EXPECT_DOUBLE_EQ(assignment_value(v, mu), 5.0);
}

TEST(MatchingWithoutTransfer, AllUnacceptable)
{
    const PayoffMatrix v{{-1, -1}, {-1, -1}};
    EXPECT_EQ(matching_without_transfer(v).matched_count(), 0u);
}

TEST(MatchingWithoutTransfer, TwoByTwoTrace)
{
    const PayoffMatrix v{{1, 2}, {3, 5}};
    const Matching mu = matching_without_transfer(v);
    EXPECT_EQ(mu.d2d_partner[0], 1);
    EXPECT_EQ(mu.d2d_partner[1], 0);
    EXPECT_DOUBLE_EQ(assignment_value(v, mu), 5.0);
}

TEST(MatchingWithoutTransfer, OnlyAcceptablePairsAndMaximal)
{
    Stream rng(12);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t cus = 1 + uniform_index(rng, 10);
        const std::size_t d2ds = 1 + uniform_index(rng, 10);
        const PayoffMatrix v = random_payoff_matrix(rng, cus, d2ds);
        const Matching mu = matching_without_transfer(v, ProposerSelector::seeded(derive_seed(3, trial)));
        ASSERT_TRUE(mu.consistent());
        for (std::size_t m = 0; m < cus; ++m) {
            if (mu.cu_partner[m] != kUnmatched) {
                EXPECT_GE(v(m, static_cast<std::size_t>(mu.cu_partner[m])), 0.0);
            }
            else {
                // A free CU was never acceptable to any unmatched pair.
                for (std::size_t n = 0; n < d2ds; ++n) {
                    if (mu.d2d_partner[n] == kUnmatched) {
                        EXPECT_LT(v(m, n), 0.0);
                    }
                }
            }
        }
    }
}

TEST(RandomMatching, SinglePair)
{
    const PayoffMatrix v{{-1}};
    Stream rng(1);
    const Matching mu = random_matching(v, rng);
    EXPECT_EQ(mu.cu_partner[0], 0);
}

TEST(RandomMatching, Reproducible)
{
    const PayoffMatrix v(6, 9);
    Stream a(42), b(42);
    EXPECT_EQ(random_matching(v, a), random_matching(v, b));
    Stream c(1);
    const Matching mu = random_matching(v, c);
    EXPECT_EQ(mu.matched_count(), 6u);
    EXPECT_TRUE(mu.consistent());
}

TEST(RandomMatching, UniformOverPerfectPairings)
{
    const PayoffMatrix v(2, 2);
    Stream rng(2025);
    int identity = 0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        if (random_matching(v, rng).cu_partner[0] == 0) {
            ++identity;
        }
    }
    EXPECT_NEAR(static_cast<double>(identity) / draws, 0.5, 0.02);
}

TEST(DeviationGain, TruthfulAnnouncementGainsNothing)
{
    Stream rng(8);
    const PayoffMatrix v = random_payoff_matrix(rng, 5, 6);
    for (std::size_t n = 0; n < 6; ++n) {
        EXPECT_EQ(deviation_gain(v, n, v.value_vector(n), 1.0), 0.0);
    }
}

TEST(DeviationGain, DroppingOutNeverHelps)
{
    Stream rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        const PayoffMatrix v = random_payoff_matrix(rng, 4, 5);
        const std::size_t n = uniform_index(rng, 5);
        EXPECT_LE(deviation_gain(v, n, std::vector<double>(4, -1.0), 0.5), 0.0);
    }
}

TEST(DeviationGain, BoundedByTruthfulnessLimit)
{
    Stream rng(10);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t cus = 1 + uniform_index(rng, 8);
        const std::size_t d2ds = 1 + uniform_index(rng, 8);
        const PayoffMatrix v = random_payoff_matrix(rng, cus, d2ds);
        const std::size_t n = uniform_index(rng, d2ds);
        std::vector<double> fake(cus);
        for (auto& x : fake) {
            x = uniform(rng, -1.0, 12.0);
        }
        EXPECT_LE(deviation_gain(v, n, fake, 1.0), deviation_bound(cus, d2ds, 1.0) + 1e-9);
    }
}

TEST(MarginalGap, Examples)
{
    const PayoffMatrix v{{5}};
    const Matching mu = run_dma(v, 1.0).matching;
    EXPECT_DOUBLE_EQ(marginal_gap(v, mu, 0), 0.0);

    const PayoffMatrix w{{4, -1}, {2, -1}};
    const Matching mw = run_dma(w, 1.0).matching;
    EXPECT_EQ(mw.d2d_partner[1], kUnmatched);
    EXPECT_DOUBLE_EQ(marginal_gap(w, mw, 1), 0.0);
}

TEST(MarginalGap, WithinBound)
{
    Stream rng(13);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t cus = 1 + uniform_index(rng, 10);
        const std::size_t d2ds = 2 + uniform_index(rng, 10);
        const double eps = trial % 2 ? 1.0 : 0.25;
        const PayoffMatrix v = random_payoff_matrix(rng, cus, d2ds);
        const Matching mu = run_dma(v, eps).matching;
        const auto gaps = marginal_gaps(v, mu);
        for (std::size_t n = 0; n < d2ds; ++n) {
            EXPECT_NEAR(gaps[n], marginal_gap(v, mu, n), 1e-12);
            EXPECT_LE(gaps[n], marginal_gap_bound(cus, d2ds, eps) + 1e-9);
        }
    }
}
