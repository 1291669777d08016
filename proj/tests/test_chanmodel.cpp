#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "d2dcoop/chanmodel.hpp"

using namespace d2dcoop;

TEST(LinkGain, UnitDistanceUnitFading)
{
    EXPECT_DOUBLE_EQ(link_gain(1.0, 4.0, 1.0), 1.0);
}

TEST(LinkGain, Pathloss)
{
    EXPECT_NEAR(link_gain(100.0, 4.0, 1.0), 1e-8, 1e-22);
    EXPECT_NEAR(link_gain(250.0, 4.0, 0.5), 1.28e-10, 1e-24);
}

TEST(LinkGain, RejectsNonPositiveDistance)
{
    EXPECT_THROW(link_gain(0.0, 4.0, 1.0), std::domain_error);
    EXPECT_THROW(link_gain(-3.0, 4.0, 1.0), std::domain_error);
    EXPECT_THROW(link_gain(10.0, 4.0, -1.0), std::domain_error);
}

TEST(LinkGain, LinearInFading)
{
    Stream rng(7);
    for (int i = 0; i < 200; ++i) {
        const double d = uniform(rng, 1.0, 800.0);
        const double xi = exponential1(rng);
        const double a = uniform(rng, 0.0, 5.0);
        EXPECT_NEAR(link_gain(d, 4.0, a * xi), a * link_gain(d, 4.0, xi), 1e-12 * link_gain(d, 4.0, a * xi) + 1e-300);
    }
}

TEST(InstantaneousRates, ZeroGains)
{
    const RateState s = instantaneous_rates(PairGains{}, RadioParams{});
    EXPECT_EQ(s.r_c, 0.0);
    EXPECT_EQ(s.r_d, 0.0);
}

TEST(InstantaneousRates, NoRelayPathFallsBackToDirect)
{
    const RadioParams radio;
    const double g = 3e-11;
    const RateState s = instantaneous_rates(PairGains{g, 0.0, 1e-9, 0.0}, radio);
    EXPECT_DOUBLE_EQ(s.r_c, std::log(1.0 + radio.p_c * g / radio.n0));
}

TEST(InstantaneousRates, HandEvaluatedRelayCase)
{
    const RadioParams radio{0.02, 0.02, 1e-13, 4.0};
    const RateState s = instantaneous_rates(PairGains{1e-11, 4e-9, 1e-9, 1e-7}, radio);
    // max{ln 3, 1/2 min[ln 801, ln 203]} = 1/2 ln 203; ln(1 + 2e4)
    EXPECT_NEAR(s.r_c, 2.6566029895208936, 1e-12);
    EXPECT_NEAR(s.r_d, 9.90353755128617, 1e-12);
}

TEST(InstantaneousRates, FastPathMatchesReference)
{
    const RadioParams radio;
    Stream rng(11);
    for (int i = 0; i < 1000; ++i) {
        const PairGains g{link_gain(uniform(rng, 50, 800), 4.0, exponential1(rng)),
                          link_gain(uniform(rng, 50, 800), 4.0, exponential1(rng)),
                          link_gain(uniform(rng, 50, 800), 4.0, exponential1(rng)), 0.0};
        const double s_mb = radio.p_c * g.h_mb / radio.n0;
        const double s_mn = radio.p_c * g.h_mn / radio.n0;
        const double s_nb = radio.p_d * g.h_nb / radio.n0;
        EXPECT_NEAR(cu_rate_from_snr(s_mb, s_mn, s_nb, std::log1p(s_mb)), instantaneous_rates(g, radio).r_c, 1e-12);
    }
}

TEST(InstantaneousRates, MonotoneInEachGain)
{
    const RadioParams radio;
    Stream rng(3);
    for (int i = 0; i < 2000; ++i) {
        PairGains lo{link_gain(uniform(rng, 50, 800), 4.0, exponential1(rng)),
                     link_gain(uniform(rng, 50, 800), 4.0, exponential1(rng)),
                     link_gain(uniform(rng, 50, 800), 4.0, exponential1(rng)),
                     link_gain(uniform(rng, 10, 60), 4.0, exponential1(rng))};
        PairGains hi = lo;
        hi.h_mb *= 1.0 + uniform01(rng);
        hi.h_mn *= 1.0 + uniform01(rng);
        hi.h_nb *= 1.0 + uniform01(rng);
        hi.h_nn *= 1.0 + uniform01(rng);
        const RateState a = instantaneous_rates(lo, radio);
        const RateState b = instantaneous_rates(hi, radio);
        EXPECT_LE(a.r_c, b.r_c);
        EXPECT_LE(a.r_d, b.r_d);

        // The max dominates both branches.
        const double direct = std::log1p(radio.p_c * lo.h_mb / radio.n0);
        const double relay = 0.5 * std::min(std::log1p(radio.p_c * lo.h_mn / radio.n0),
                                            std::log1p(radio.p_c * lo.h_mb / radio.n0 + radio.p_d * lo.h_nb / radio.n0));
        EXPECT_GE(a.r_c, direct);
        EXPECT_GE(a.r_c, relay);
    }
}

TEST(RadioParams, Validation)
{
    EXPECT_NO_THROW(RadioParams{}.validate());
    EXPECT_THROW((RadioParams{0.0, 0.02, 1e-13, 4.0}.validate()), std::invalid_argument);
    EXPECT_THROW((RadioParams{0.02, 0.02, 1e-13, 1.5}.validate()), std::invalid_argument);
}

TEST(Units, Conversions)
{
    EXPECT_NEAR(dbm_to_watts(-100.0), 1e-13, 1e-27);
    EXPECT_NEAR(dbm_to_watts(13.0103), 0.02, 1e-6);
    EXPECT_NEAR(bps_to_nats(1.8), 1.2476649250079015, 1e-15);
}

TEST(EmpiricalStateSet, Invariants)
{
    EXPECT_THROW(EmpiricalStateSet(std::vector<RateState>{}), std::domain_error);
    EXPECT_THROW(EmpiricalStateSet({{1, 1}}, {0.5}), std::invalid_argument);
    EXPECT_THROW(EmpiricalStateSet({{1, 1}, {2, 2}}, {1.0, 0.0}), std::invalid_argument);
    EXPECT_THROW(EmpiricalStateSet({{-1, 1}}), std::invalid_argument);

    EmpiricalStateSet set({{4, 1}, {1, 4}, {2, 2}});
    const double total = std::accumulate(set.weights().begin(), set.weights().end(), 0.0);
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_NEAR(set.mean_cu_rate(), 7.0 / 3.0, 1e-15);
}

TEST(SampleStateSet, DegenerateFading)
{
    const RadioParams radio;
    const PairGeometry geom{500.0, 150.0, 300.0, 20.0};
    const auto set = sample_state_set(geom, radio, 1, [] { return 1.0; });
    ASSERT_EQ(set.size(), 1u);
    const PairGains mean_gains{link_gain(500.0, 4.0, 1.0), link_gain(150.0, 4.0, 1.0), link_gain(300.0, 4.0, 1.0),
                               link_gain(20.0, 4.0, 1.0)};
    EXPECT_EQ(set.state(0), instantaneous_rates(mean_gains, radio));
    EXPECT_DOUBLE_EQ(set.weight(0), 1.0);
}

TEST(SampleStateSet, Deterministic)
{
    const PairGeometry geom{500.0, 150.0, 300.0, 20.0};
    Stream a(99), b(99);
    const auto s1 = sample_state_set(geom, RadioParams{}, 500, a);
    const auto s2 = sample_state_set(geom, RadioParams{}, 500, b);
    EXPECT_EQ(s1.states(), s2.states());
    const double total = std::accumulate(s1.weights().begin(), s1.weights().end(), 0.0);
    EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(SampleStateSet, ZeroCountRejected)
{
    Stream rng(1);
    EXPECT_THROW(sample_state_set(PairGeometry{1, 1, 1, 1}, RadioParams{}, 0, rng), std::domain_error);
}

TEST(SampleStateSet, D2DRateMatchesExponentialFadingMean)
{
    // SNR S = 0.02 * 20^-4 / 1e-13 = 1.25e6. For unit-mean exponential fading
    // E ln(1 + S xi) = e^{1/S} E1(1/S) = 13.4614500135325, sd 1.28248480537925
    // (evaluated with mpmath quadrature).
    const PairGeometry geom{500.0, 150.0, 300.0, 20.0};
    Stream rng(2024);
    const std::size_t k = 100000;
    const auto set = sample_state_set(geom, RadioParams{}, k, rng);
    const double se = 1.28248480537925 / std::sqrt(static_cast<double>(k));
    EXPECT_NEAR(set.mean_d2d_rate(), 13.4614500135325, 3.0 * se);
}
