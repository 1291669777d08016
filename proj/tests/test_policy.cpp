#include <gtest/gtest.h>

#include <cmath>

#include "d2dcoop/policy.hpp"
#include "test_support.hpp"

using namespace d2dcoop;
using d2dcoop::testing::brute_force_policy_value;
using d2dcoop::testing::random_small_state_set;

namespace {

EmpiricalStateSet two_state_set()
{
    return EmpiricalStateSet({{4.0, 1.0}, {1.0, 4.0}});
}

} // namespace

TEST(CoverageValue, Examples)
{
    EmpiricalStateSet set({{1.0, 2.0}, {3.0, 0.5}, {2.0, 7.0}});
    EXPECT_EQ(coverage_value(set, 0.0), 0.0);
    EXPECT_NEAR(coverage_value(set, 10.0), set.mean_cu_rate(), 1e-15);
    EXPECT_NEAR(coverage_value(two_state_set(), 1.0), 2.0, 1e-15);
    EXPECT_THROW(coverage_value(set, -1.0), std::domain_error);
}

TEST(CoverageValue, MonotoneInLambda)
{
    Stream rng(5);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto set = random_small_state_set(rng);
        const double a = uniform(rng, 0.0, 6.0);
        const double b = uniform(rng, 0.0, 6.0);
        EXPECT_LE(coverage_value(set, std::min(a, b)), coverage_value(set, std::max(a, b)) + 1e-15);
    }
}

TEST(SolvePolicy, SingleStateTieSplit)
{
    EmpiricalStateSet set({{2.0, 5.0}});
    const auto policy = solve_policy(set, 1.0);
    ASSERT_TRUE(policy);
    EXPECT_DOUBLE_EQ(policy->lambda_star, 2.5);
    EXPECT_DOUBLE_EQ(policy->alpha_tie, 0.5);
    const auto outcome = evaluate_policy(set, *policy);
    EXPECT_DOUBLE_EQ(outcome.d2d_rate, 2.5);
    EXPECT_DOUBLE_EQ(outcome.cu_rate, 1.0);
}

TEST(SolvePolicy, TwoStateExample)
{
    const auto set = two_state_set();
    for (auto method : {SolveMethod::exact, SolveMethod::bisection}) {
        const auto policy = solve_policy(set, 2.0, method);
        ASSERT_TRUE(policy);
        EXPECT_NEAR(policy->lambda_star, 0.25, 1e-9);
        EXPECT_NEAR(policy->alpha_tie, 0.0, 1e-12);
        const auto outcome = evaluate_policy(set, *policy);
        EXPECT_NEAR(outcome.d2d_rate, 2.0, 1e-12);
        EXPECT_NEAR(outcome.cu_rate, 2.0, 1e-12);
    }
}

TEST(SolvePolicy, InfeasibleWhenMeanCuRateTooLow)
{
    EXPECT_FALSE(solve_policy(two_state_set(), 2.6));
    const auto payoff = pair_payoff(two_state_set(), 2.6, 3.0);
    EXPECT_EQ(payoff.u, -1.0);
    EXPECT_EQ(payoff.v, -3.0);
    EXPECT_FALSE(payoff.feasible());
}

TEST(SolvePolicy, RejectsNegativeRequirement)
{
    EXPECT_THROW(solve_policy(two_state_set(), -0.1), std::domain_error);
}

TEST(EvaluatePolicy, ExtremeThresholds)
{
    EmpiricalStateSet set({{1.0, 2.0}, {3.0, 0.0}, {2.0, 7.0}});
    // Threshold zero, full D2D share on ties: everything but r_d = 0 states to D2D.
    const auto all_d2d = evaluate_policy(set, ThresholdPolicy{0.0, 1.0});
    EXPECT_NEAR(all_d2d.d2d_rate, set.mean_d2d_rate(), 1e-15);
    EXPECT_NEAR(all_d2d.cu_rate, 0.0, 1e-15);
    const auto tie_to_cu = evaluate_policy(set, ThresholdPolicy{0.0, 0.0});
    EXPECT_NEAR(tie_to_cu.cu_rate, 1.0, 1e-15);   // the (3, 0) state, weight 1/3

    // Threshold above every ratio: all CU.
    const auto all_cu = evaluate_policy(set, ThresholdPolicy{100.0, 0.0});
    EXPECT_EQ(all_cu.d2d_rate, 0.0);
    EXPECT_NEAR(all_cu.cu_rate, set.mean_cu_rate(), 1e-15);
}

TEST(PairPayoff, Examples)
{
    const auto feasible = pair_payoff(two_state_set(), 2.0, 1.0);
    EXPECT_NEAR(feasible.u, 2.0, 1e-12);
    EXPECT_NEAR(feasible.v, 2.0, 1e-12);

    EmpiricalStateSet set({{1.0, 2.0}, {3.0, 0.0}, {2.0, 7.0}});
    const auto zero_req = pair_payoff(set, 0.0, 2.0);
    EXPECT_EQ(zero_req.policy->lambda_star, 0.0);
    EXPECT_NEAR(zero_req.u, set.mean_d2d_rate(), 1e-15);
    EXPECT_NEAR(zero_req.v, 2.0 * set.mean_d2d_rate(), 1e-15);
    EXPECT_THROW(pair_payoff(set, 1.0, 0.0), std::domain_error);
}

TEST(PairPayoff, ZeroRateStates)
{
    // r_c = 0 states always go to D2D; r_c = r_d = 0 states contribute nothing.
    EmpiricalStateSet set({{0.0, 3.0}, {0.0, 0.0}, {2.0, 1.0}, {4.0, 4.0}});
    const auto policy = solve_policy(set, 1.0);
    ASSERT_TRUE(policy);
    EXPECT_EQ(policy->allocation({0.0, 3.0}), 1.0);
    EXPECT_EQ(policy->allocation({0.0, 0.0}), 0.0);
    const auto outcome = evaluate_policy(set, *policy);
    EXPECT_NEAR(outcome.cu_rate, 1.0, 1e-12);
    EXPECT_NEAR(outcome.d2d_rate, brute_force_policy_value(set, 1.0), 1e-12);
}

TEST(WeightedSumCondition, Examples)
{
    EmpiricalStateSet good({{1.0, 5.0}, {2.0, 9.0}});
    EXPECT_TRUE(weighted_sum_condition(good, 1.0, 0.5));
    EmpiricalStateSet mixed({{1.0, 5.0}, {2.0, 1.0}});
    EXPECT_FALSE(weighted_sum_condition(mixed, 1.0, 0.0));
    // Pr = 0.5 versus 1 - 4 / 8.5 = 0.529.
    EXPECT_FALSE(weighted_sum_condition(two_state_set(), 1.0, 2.0));
    EXPECT_THROW(weighted_sum_condition(good, -1.0, 1.0), std::domain_error);
}

TEST(SolvePolicyProperties, OptimalBindingAndMethodsAgree)
{
    Stream rng(20240611);
    int feasible = 0;
    for (int trial = 0; trial < 3000; ++trial) {
        const auto set = random_small_state_set(rng);
        const double r_th = uniform(rng, 0.0, 1.2 * set.mean_cu_rate());
        const auto exact = solve_policy(set, r_th, SolveMethod::exact);
        const auto bisect = solve_policy(set, r_th, SolveMethod::bisection, 1e-9);
        const double oracle = brute_force_policy_value(set, r_th);
        ASSERT_EQ(exact.has_value(), std::isfinite(oracle));
        ASSERT_EQ(exact.has_value(), bisect.has_value());
        if (!exact) {
            continue;
        }
        ++feasible;
        const auto a = evaluate_policy(set, *exact);
        const auto b = evaluate_policy(set, *bisect);
        EXPECT_NEAR(a.d2d_rate, oracle, 1e-9);
        EXPECT_NEAR(a.cu_rate, r_th, 1e-9);
        EXPECT_NEAR(b.cu_rate, r_th, 1e-9);
        EXPECT_NEAR(exact->lambda_star, bisect->lambda_star, 1e-9 * (1.0 + exact->lambda_star));
        EXPECT_NEAR(a.d2d_rate, b.d2d_rate, 1e-6);
    }
    EXPECT_GT(feasible, 1500);
}

TEST(SolvePolicyProperties, PayoffNonincreasingInRequirement)
{
    Stream rng(77);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto set = random_small_state_set(rng);
        const double hi = set.mean_cu_rate();
        const double a = uniform(rng, 0.0, hi);
        const double b = uniform(rng, 0.0, hi);
        const double ua = pair_payoff(set, std::min(a, b), 1.0).u;
        const double ub = pair_payoff(set, std::max(a, b), 1.0).u;
        EXPECT_GE(ua, ub - 1e-12);
    }
}

TEST(SolvePolicyProperties, WeightedSumOptimalityUnderCondition)
{
    Stream rng(4242);
    int checked = 0;
    for (int trial = 0; trial < 5000; ++trial) {
        const auto set = random_small_state_set(rng);
        const double r_th = uniform(rng, 0.0, set.mean_cu_rate());
        const double eta = uniform(rng, 0.0, 2.0);
        const auto policy = solve_policy(set, r_th);
        if (!policy || !weighted_sum_condition(set, eta, r_th)) {
            continue;
        }
        ++checked;
        const auto outcome = evaluate_policy(set, *policy);
        const double value = outcome.d2d_rate + eta * outcome.cu_rate;
        EXPECT_NEAR(value, brute_force_policy_value(set, r_th, eta), 1e-9);
    }
    EXPECT_GT(checked, 100);
}

TEST(SolvePolicyProperties, LargeSampleBinding)
{
    Stream rng(8);
    const PairGeometry geom{500.0, 180.0, 320.0, 25.0};
    const auto set = sample_state_set(geom, RadioParams{}, 20000, rng);
    const double r_th = bps_to_nats(1.8);
    const auto exact = solve_policy(set, r_th);
    ASSERT_TRUE(exact);
    const auto bisect = solve_policy(set, r_th, SolveMethod::bisection);
    EXPECT_NEAR(evaluate_policy(set, *exact).cu_rate, r_th, 1e-9);
    EXPECT_NEAR(evaluate_policy(set, *exact).d2d_rate, evaluate_policy(set, *bisect).d2d_rate, 1e-6);
}
