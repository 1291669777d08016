#include <gtest/gtest.h>

#include "d2dcoop/assignment.hpp"
#include "test_support.hpp"

using namespace d2dcoop;

TEST(OptimalAssignment, TwoByTwo)
{
    const PayoffMatrix v{{1, 2}, {3, 5}};
    const Assignment a = optimal_assignment(v);
    EXPECT_EQ(a.cu_partner, (std::vector<int>{0, 1}));
    EXPECT_DOUBLE_EQ(a.value, 6.0);
    EXPECT_DOUBLE_EQ(assignment_value(v, to_matching(a, 2)), 6.0);
}

TEST(OptimalAssignment, UnacceptablePairNeverMatched)
{
    const PayoffMatrix v{{-1}};
    const Assignment a = optimal_assignment(v);
    EXPECT_EQ(a.cu_partner, (std::vector<int>{kUnmatched}));
    EXPECT_EQ(a.value, 0.0);
}

TEST(OptimalAssignment, DominantRow)
{
    const PayoffMatrix v{{9, 9}, {0, 0}};
    const Assignment a = optimal_assignment(v);
    EXPECT_DOUBLE_EQ(a.value, 9.0);
    EXPECT_NE(a.cu_partner[0], kUnmatched);
}

TEST(OptimalAssignment, Rectangular)
{
    const PayoffMatrix v{{5, 3, 8}};
    EXPECT_DOUBLE_EQ(optimal_assignment(v).value, 8.0);
    const PayoffMatrix w{{5}, {3}, {-2}};
    EXPECT_DOUBLE_EQ(optimal_assignment(w).value, 5.0);
}

TEST(OptimalAssignment, AgreesWithEnumeration)
{
    Stream rng(123);
    for (int trial = 0; trial < 3000; ++trial) {
        const std::size_t m = 1 + uniform_index(rng, 4);
        const std::size_t n = 1 + uniform_index(rng, 4);
        PayoffMatrix v = d2dcoop::testing::random_payoff_matrix(rng, m, n);
        if (trial % 3 == 0) {
            // Integer values produce many ties.
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    v(i, j) = std::floor(v(i, j));
                }
            }
        }
        const Assignment a = optimal_assignment(v);
        EXPECT_NEAR(a.value, d2dcoop::testing::brute_force_assignment_value(v), 1e-9);
        const Matching mu = to_matching(a, n);
        EXPECT_TRUE(mu.consistent());
        EXPECT_NEAR(assignment_value(v, mu), a.value, 1e-12);
        for (std::size_t i = 0; i < m; ++i) {
            if (a.cu_partner[i] != kUnmatched) {
                EXPECT_GE(v(i, static_cast<std::size_t>(a.cu_partner[i])), 0.0);
            }
        }
    }
}

TEST(OptimalValue, SubsetRestriction)
{
    const PayoffMatrix v{{1, 2}, {3, 5}};
    EXPECT_DOUBLE_EQ(optimal_value(v, {true, true}, {true, false}), 3.0);
    EXPECT_DOUBLE_EQ(optimal_value(v, {true, false}, {true, true}), 2.0);
    EXPECT_DOUBLE_EQ(optimal_value(v, {false, false}, {true, true}), 0.0);
}

TEST(AssignmentValue, Examples)
{
    const PayoffMatrix v{{1, 2}, {3, 5}};
    EXPECT_EQ(assignment_value(v, Matching::empty(2, 2)), 0.0);
    const PayoffMatrix w{{5, 3}};
    Matching mu = Matching::empty(1, 2);
    mu.pair(0, 0);
    EXPECT_DOUBLE_EQ(assignment_value(w, mu), 5.0);
}
