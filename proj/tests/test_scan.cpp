#include <bit>

#include <gtest/gtest.h>

#include "psn/scan.hpp"
#include "support/oracles.hpp"

using namespace psn;

TEST(PrefixSum, OnesGiveRunningCount)
{
    Tensor<float> x({3, 1}, {1, 1, 1});
    EXPECT_EQ(scan::prefix_sum(x).to_vector(), (std::vector<float>{1, 2, 3}));
}

TEST(PrefixSum, ImpulseHolds)
{
    Tensor<float> x({4, 1}, {5, 0, 0, 0});
    EXPECT_EQ(scan::prefix_sum(x).to_vector(), (std::vector<float>{5, 5, 5, 5}));
}

TEST(PrefixSum, MatchesSerialLoop)
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const std::size_t width = 1 + seed * 7;
        auto x = oracle::random_tensor<float>({64, width}, seed);
        auto got = scan::prefix_sum(x);
        auto want = oracle::serial_cumsum(x.data(), 64, width);
        for (std::size_t i = 0; i < want.size(); ++i)
            ASSERT_NEAR(got[i], want[i], 1e-5) << "seed " << seed << " index " << i;
    }
}

TEST(LinrecScan, LeakyImpulse)
{
    Tensor<float> x({3, 1}, {1, 0, 0});
    auto h = scan::linrec_scan(x, scan::LinearRecurrence::leaky(2.0));
    EXPECT_EQ(h.to_vector(), (std::vector<float>{0.5f, 0.25f, 0.125f}));
}

TEST(LinrecScan, UnitDecayEqualsPrefixSum)
{
    auto x = oracle::random_tensor<float>({13, 9}, 3);
    EXPECT_EQ(scan::linrec_scan(x, {1.0, 1.0, 0.0}).to_vector(), scan::prefix_sum(x).to_vector());
}

TEST(LinrecScan, MatchesIteratedLeakyCharge)
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto x = oracle::random_tensor<float>({64, 17}, seed);
        auto got = scan::linrec_scan(x, scan::LinearRecurrence::leaky(2.0));
        auto want = oracle::serial_recurrence(x.data(), 64, 17, 0.5, 0.5);
        for (std::size_t i = 0; i < want.size(); ++i)
            ASSERT_NEAR(got[i], want[i], 1e-5);
    }
}

TEST(LinrecScan, MatchesRecurrenceAcrossDecayGainGrid)
{
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> unit(1e-3, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const double a = trial % 10 == 0 ? 1.0 : unit(rng);
        const double b = trial % 7 == 0 ? 1.0 : unit(rng);
        const std::size_t steps = 1 + trial % 64;
        const std::size_t width = 1 + trial % 5;
        auto x = oracle::random_tensor<float>({steps, width}, 1000 + trial);
        auto got = scan::linrec_scan(x, {a, b, 0.0});
        auto want = oracle::serial_recurrence(x.data(), steps, width, a, b);
        for (std::size_t i = 0; i < want.size(); ++i)
            ASSERT_NEAR(got[i], want[i], 1e-5) << "a=" << a << " b=" << b << " T=" << steps;
    }
}

TEST(LinrecScan, InitialStateDecays)
{
    Tensor<double> x = Tensor<double>::zeros({4, 2});
    auto h = scan::linrec_scan(x, {0.5, 0.5, 2.0});
    auto want = oracle::serial_recurrence(x.cast<float>().data(), 4, 2, 0.5, 0.5, 2.0);
    for (std::size_t i = 0; i < want.size(); ++i)
        EXPECT_DOUBLE_EQ(h[i], want[i]);
}

TEST(LinrecScan, LeakyNeedsTauAboveOne)
{
    EXPECT_THROW(scan::LinearRecurrence::leaky(1.0), ContractError);
    EXPECT_THROW(scan::LinearRecurrence::leaky(0.5), ContractError);
}

TEST(Combine, AssociativeInDoublePrecision)
{
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> unit(0.0, 1.0), val(-2.0, 2.0);
    for (int i = 0; i < 1000; ++i) {
        scan::Affine p{unit(rng), val(rng)}, q{unit(rng), val(rng)}, r{unit(rng), val(rng)};
        auto left = scan::combine(scan::combine(p, q), r);
        auto right = scan::combine(p, scan::combine(q, r));
        EXPECT_NEAR(left.a, right.a, 1e-7);
        EXPECT_NEAR(left.c, right.c, 1e-7);
    }
}

TEST(Combine, IdentityElement)
{
    scan::Affine e{1.0, 0.0}, p{0.3, -1.25};
    EXPECT_EQ(scan::combine(e, p).a, p.a);
    EXPECT_EQ(scan::combine(e, p).c, p.c);
    EXPECT_EQ(scan::combine(p, e).c, p.c);
}

TEST(ScanWork, LinearWorkLogarithmicDepth)
{
    for (std::size_t steps : {1u, 2u, 3u, 5u, 8u, 17u, 33u, 64u}) {
        scan::ScanStats stats;
        scan::prefix_sum(Tensor<float>({steps, 3}), &stats);
        const std::size_t padded = std::bit_ceil(steps);
        EXPECT_EQ(stats.padded_length, padded);
        EXPECT_EQ(stats.combines, 2 * (padded - 1));
        EXPECT_LE(stats.combines, 4 * steps);
        EXPECT_EQ(stats.levels, 2 * static_cast<std::size_t>(std::countr_zero(padded)));
    }
}

TEST(ScanGradient, ReversedScanMatchesFiniteDifferences)
{
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const std::size_t steps = 3 + seed * 5;
        auto x = oracle::random_tensor<double>({steps, 3}, seed);
        auto w = oracle::random_tensor<double>({steps, 3}, seed + 50);
        x.set_requires_grad();
        const scan::LinearRecurrence rec{0.7, 0.4, 0.3};
        auto f = [&] {
            auto h = scan::linrec_scan(x, rec);
            return sum(mul(mul(h, h), w)).item();
        };
        {
            Tape<double> tape;
            auto r = tape.record();
            auto h = scan::linrec_scan(x, rec);
            tape.backward(sum(mul(mul(h, h), w)));
        }
        EXPECT_LT(oracle::max_rel_error(x.grad(), oracle::finite_difference(x, f)), 1e-3);
    }
}

TEST(ScanFaultHook, CorruptCombineBreaksEquivalence)
{
    auto x = oracle::random_tensor<float>({8, 2}, 1);
    auto good = scan::prefix_sum(x);
    scan::testing::corrupt_combine() = true;
    auto bad = scan::prefix_sum(x);
    scan::testing::corrupt_combine() = false;
    EXPECT_NE(good.to_vector(), bad.to_vector());
}
