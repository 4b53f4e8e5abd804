#include <cmath>

#include <gtest/gtest.h>

#include "psn/psn_family.hpp"
#include "support/oracles.hpp"

using namespace psn;

namespace {

SurrogateConfig relaxed()
{
    SurrogateConfig c;
    c.relaxed = true;
    return c;
}

template <class T>
PSNParams<T> fixed_psn(std::size_t steps, auto weight_of, double threshold)
{
    PSNParams<T> p{Tensor<T>({steps, steps}), Tensor<T>({steps}, static_cast<T>(threshold))};
    auto w = p.weight.mutable_data();
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t i = 0; i < steps; ++i)
            w[t * steps + i] = static_cast<T>(weight_of(t, i));
    return p;
}

double if_weight(std::size_t t, std::size_t i) { return t >= i ? 1.0 : 0.0; }

double lif_weight(std::size_t t, std::size_t i)
{
    const double tau = 2.0;
    return t >= i ? (1.0 / tau) * std::pow(1.0 - 1.0 / tau, static_cast<double>(t - i)) : 0.0;
}

} // namespace

TEST(PSN, LowerTriangularOnesGiveRunningSums)
{
    auto x = oracle::random_tensor<float>({6, 4}, 1);
    auto p = fixed_psn<float>(6, if_weight, 1e9);
    auto tr = psn_forward(x, p);
    auto want = oracle::serial_cumsum(x.data(), 6, 4);
    for (std::size_t i = 0; i < want.size(); ++i)
        EXPECT_NEAR(tr.h[i], want[i], 1e-5);
    EXPECT_EQ(tr.firing_rate(), 0.0);
}

TEST(PSN, LeakyWeightsReproduceLifWithoutReset)
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const std::size_t steps = 2 + seed * 6;
        auto x = oracle::random_tensor<float>({steps, 32}, seed);
        auto tr = psn_forward(x, fixed_psn<float>(steps, lif_weight, 1.0));
        auto ref = vanilla_sequence(x, VanillaNeuronParams::lif(2.0, ResetMode::none));
        for (std::size_t i = 0; i < x.numel(); ++i) {
            EXPECT_NEAR(tr.h[i], ref.h[i], 1e-5);
            EXPECT_EQ(tr.s[i], ref.s[i]);
        }
    }
}

TEST(PSN, IdentityWeightsAreMemoryless)
{
    auto x = oracle::random_tensor<float>({5, 7}, 2);
    auto tr = psn_forward(x, fixed_psn<float>(5, [](auto t, auto i) { return t == i ? 1.0 : 0.0; }, 0.5));
    for (std::size_t i = 0; i < x.numel(); ++i)
        EXPECT_EQ(tr.s[i], x[i] >= 0.5f ? 1.0f : 0.0f);
}

TEST(PSN, TimeExtentMismatchThrows)
{
    Rng rng(0);
    auto p = PSNParams<float>::init(4, rng);
    EXPECT_THROW(psn_forward(Tensor<float>({5, 2}), p), DimensionError);
}

TEST(PSN, InitBoundsAndThresholds)
{
    Rng rng(3);
    auto p = PSNParams<float>::init(16, rng);
    const float bound = 1.0f / 4.0f;
    for (float w : p.weight.data()) {
        EXPECT_LE(std::abs(w), bound);
    }
    for (float b : p.threshold.data())
        EXPECT_EQ(b, 1.0f);
    EXPECT_TRUE(p.weight.requires_grad());
}

TEST(PSN, SingleStepIsThresholdedAffineMap)
{
    auto x = oracle::random_tensor<float>({1, 10}, 4);
    auto p = fixed_psn<float>(1, [](auto, auto) { return 0.75; }, 0.2);
    auto tr = psn_forward(x, p);
    for (std::size_t i = 0; i < 10; ++i)
        EXPECT_EQ(tr.s[i], 0.75f * x[i] >= 0.2f ? 1.0f : 0.0f);
}

TEST(Mask, HandExpandedOrderTwo)
{
    EXPECT_EQ(build_mask<float>(3, 2).to_vector(), (std::vector<float>{1, 0, 0, 1, 1, 0, 0, 1, 1}));
}

TEST(Mask, FullOrderIsLowerTriangularAndOrderOneIsIdentity)
{
    auto full = build_mask<float>(5, 5);
    auto eye = build_mask<float>(5, 1);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            EXPECT_EQ(full.at({i, j}), j <= i ? 1.0f : 0.0f);
            EXPECT_EQ(eye.at({i, j}), i == j ? 1.0f : 0.0f);
        }
}

TEST(Mask, MatchesIndexPredicate)
{
    for (std::size_t t = 1; t <= 8; ++t)
        for (std::size_t k = 1; k <= t; ++k) {
            auto m = build_mask<float>(t, k);
            for (std::size_t i = 0; i < t; ++i)
                for (std::size_t j = 0; j < t; ++j)
                    ASSERT_EQ(m.at({i, j}), oracle::mask_predicate(i, j, k) ? 1.0f : 0.0f);
        }
}

TEST(Mask, OrderOutOfRange)
{
    EXPECT_THROW(build_mask<float>(4, 0), ContractError);
    EXPECT_THROW(build_mask<float>(4, 5), ContractError);
}

TEST(BlendMask, Endpoints)
{
    auto m = build_mask<float>(4, 2);
    EXPECT_EQ(blend_mask(m, 0.0).to_vector(), std::vector<float>(16, 1.0f));
    EXPECT_EQ(blend_mask(m, 1.0).to_vector(), m.to_vector());
    EXPECT_EQ(blend_mask(m, 0.5).at({0, 3}), 0.5f);
    EXPECT_EQ(blend_mask(m, 0.5).at({1, 0}), 1.0f);
    EXPECT_THROW(blend_mask(m, 1.5), ContractError);
    EXPECT_THROW(blend_mask(m, -0.1), ContractError);
}

TEST(MaskedPSN, ZeroLambdaEqualsPlainPSN)
{
    Rng rng(5);
    auto mp = MaskedPSNParams<float>::init(8, 3, rng);
    mp.lambda = 0.0;
    auto x = oracle::random_tensor<float>({8, 6}, 6);
    auto a = masked_psn_forward(x, mp);
    auto b = psn_forward(x, PSNParams<float>{mp.weight, mp.threshold});
    EXPECT_EQ(a.h.to_vector(), b.h.to_vector());
    EXPECT_EQ(a.s.to_vector(), b.s.to_vector());
}

TEST(MaskedPSN, FullOrderEqualsTriangularPSN)
{
    Rng rng(6);
    auto mp = MaskedPSNParams<float>::init(6, 6, rng);
    mp.lambda = 1.0;
    auto tri = mp.weight.clone();
    auto d = tri.mutable_data();
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = i + 1; j < 6; ++j)
            d[i * 6 + j] = 0.0f;
    auto x = oracle::random_tensor<float>({6, 5}, 7);
    auto a = masked_psn_forward(x, mp);
    auto b = psn_forward(x, PSNParams<float>{tri, mp.threshold});
    EXPECT_EQ(a.h.to_vector(), b.h.to_vector());
}

TEST(MaskedPSN, CausalWindowByPerturbation)
{
    Rng rng(7);
    for (std::size_t k : {1u, 2u, 4u, 8u}) {
        auto mp = MaskedPSNParams<float>::init(8, k, rng);
        auto x = oracle::random_tensor<float>({8, 3}, k);
        auto base = masked_psn_forward(x, mp);
        for (std::size_t i = 0; i < 8; ++i) {
            auto xp = x.clone();
            for (std::size_t n = 0; n < 3; ++n)
                xp.mutable_data()[i * 3 + n] += 3.0f;
            auto moved = masked_psn_forward(xp, mp);
            for (std::size_t t = 0; t < 8; ++t) {
                const bool outside = i > t || i + k < t + 1;
                if (!outside)
                    continue;
                for (std::size_t n = 0; n < 3; ++n)
                    ASSERT_EQ(base.h.at({t, n}), moved.h.at({t, n})) << "k=" << k << " t=" << t << " i=" << i;
            }
        }
    }
}

TEST(MaskedPSN, CausalWindowByGradient)
{
    Rng rng(8);
    const std::size_t steps = 8, k = 3;
    auto mp = MaskedPSNParams<double>::init(steps, k, rng);
    for (std::size_t t = 0; t < steps; ++t) {
        auto x = oracle::random_tensor<double>({steps, 2}, t);
        x.set_requires_grad();
        Tape<double> tape;
        auto rec = tape.record();
        auto tr = masked_psn_forward(x, mp);
        tape.backward(sum(row(tr.h, t)));
        for (std::size_t i = 0; i < steps; ++i) {
            const bool inside = i <= t && i + k >= t + 1;
            for (std::size_t n = 0; n < 2; ++n) {
                if (!inside)
                    EXPECT_EQ(x.grad()[i * 2 + n], 0.0);
                else
                    EXPECT_EQ(x.grad()[i * 2 + n], mp.weight.at({t, i}));
            }
        }
    }
}

TEST(LambdaSchedule, FormulaValues)
{
    EXPECT_EQ(lambda_schedule(0, 256), 0.0);
    EXPECT_EQ(lambda_schedule(32, 256), 1.0);
    EXPECT_DOUBLE_EQ(lambda_schedule(16, 256), 128.0 / 255.0);
    for (int e = 7; e < 50; ++e)
        EXPECT_EQ(lambda_schedule(e, 50), 1.0);
    EXPECT_LT(lambda_schedule(6, 50), 1.0);
    EXPECT_THROW(lambda_schedule(0, 1), ContractError);
    EXPECT_THROW(lambda_schedule(5, 5), ContractError);
}

TEST(LambdaSchedule, MonotoneAndSaturatesByCeilBound)
{
    for (int epochs = 2; epochs < 300; epochs += 7) {
        double prev = -1.0;
        const int bound = (epochs - 1 + 7) / 8;
        for (int e = 0; e < epochs; ++e) {
            const double l = lambda_schedule(e, epochs);
            EXPECT_GE(l, prev);
            if (e >= bound)
                EXPECT_EQ(l, 1.0);
            prev = l;
        }
    }
}

TEST(SlidingPSN, BuildAHandExpanded)
{
    SlidingPSNParams<float> p{Tensor<float>({2}, {2.0f, 3.0f}), Tensor<float>({1}, {1.0f})};
    EXPECT_EQ(spsn_build_A(p, 3).to_vector(), (std::vector<float>{3, 0, 0, 2, 3, 0, 0, 2, 3}));
    EXPECT_EQ(spsn_build_A(p, 2).to_vector(), (std::vector<float>{3, 0, 2, 3}));
    SlidingPSNParams<float> one{Tensor<float>({1}, {0.5f}), Tensor<float>({1}, {1.0f})};
    EXPECT_EQ(spsn_build_A(one, 3).to_vector(), (std::vector<float>{0.5f, 0, 0, 0, 0.5f, 0, 0, 0, 0.5f}));
}

TEST(SlidingPSN, OrderOneIsMemoryless)
{
    SlidingPSNParams<float> p{Tensor<float>({1}, {1.0f}), Tensor<float>({1}, {1.0f})};
    auto x = oracle::random_tensor<float>({9, 4}, 3);
    auto tr = spsn_forward(x, p);
    for (std::size_t i = 0; i < x.numel(); ++i)
        EXPECT_EQ(tr.s[i], x[i] >= 1.0f ? 1.0f : 0.0f);
}

TEST(SlidingPSN, DefaultInitImpulseResponse)
{
    auto p = SlidingPSNParams<float>::init(4);
    EXPECT_EQ(p.weight.to_vector(), (std::vector<float>{0.125f, 0.25f, 0.5f, 1.0f}));
    Tensor<float> x({8, 1});
    x.mutable_data()[0] = 1.0f;
    auto tr = spsn_forward(x, p);
    for (std::size_t t = 0; t < 8; ++t)
        EXPECT_EQ(tr.h[t], t < 4 ? std::ldexp(1.0f, -static_cast<int>(t)) : 0.0f);
}

TEST(SlidingPSN, MatmulAndConvPathsAgree)
{
    Rng rng(1);
    std::normal_distribution<float> nd(0.0f, 0.5f);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto p = SlidingPSNParams<float>::init(8);
        for (auto& w : p.weight.mutable_data())
            w += nd(rng);
        auto x = oracle::random_tensor<float>({32, 16}, seed);
        auto a = spsn_forward(x, p, {}, SlidingPath::matmul);
        auto b = spsn_forward(x, p, {}, SlidingPath::conv);
        for (std::size_t i = 0; i < x.numel(); ++i)
            ASSERT_NEAR(a.h[i], b.h[i], 1e-6);
    }
}

TEST(SlidingPSN, ShiftingInputShiftsPotential)
{
    auto p = SlidingPSNParams<float>::init(3);
    auto x = oracle::random_tensor<float>({12, 4}, 9);
    Tensor<float> shifted({12, 4});
    auto d = shifted.mutable_data();
    for (std::size_t t = 1; t < 12; ++t)
        for (std::size_t n = 0; n < 4; ++n)
            d[t * 4 + n] = x.at({t - 1, n});
    auto a = spsn_forward(x, p);
    auto b = spsn_forward(shifted, p);
    for (std::size_t t = 3; t < 12; ++t)
        for (std::size_t n = 0; n < 4; ++n)
            EXPECT_FLOAT_EQ(b.h.at({t, n}), a.h.at({t - 1, n}));
}

TEST(SlidingPSN, HandlesVariableLengths)
{
    auto p = SlidingPSNParams<float>::init(4);
    for (std::size_t steps : {1u, 2u, 5u, 17u}) {
        auto tr = spsn_forward(oracle::random_tensor<float>({steps, 3}, steps), p);
        EXPECT_EQ(tr.s.shape(), (Shape{steps, 3}));
    }
}

TEST(SlidingPSN, ConvPathDoesNotRecord)
{
    auto p = SlidingPSNParams<float>::init(2);
    Tape<float> tape;
    auto rec = tape.record();
    auto tr = spsn_forward(oracle::random_tensor<float>({4, 2}, 1), p, {}, SlidingPath::conv);
    EXPECT_FALSE(tr.s.requires_grad());
    EXPECT_EQ(tape.size(), 0u);
}

TEST(ParamCount, Accounting)
{
    EXPECT_EQ(param_count(NeuronKind::psn, 4), 20u);
    EXPECT_EQ(param_count(NeuronKind::masked_psn, 4, 2), 20u);
    EXPECT_EQ(param_count(NeuronKind::sliding_psn, 4, 2), 3u);
    EXPECT_EQ(param_count(NeuronKind::lif, 4), 0u);
    // 17 and 10 PSN layers at T = 4 account for the 340 / 200 extra parameters.
    EXPECT_EQ(17 * param_count(NeuronKind::psn, 4), 340u);
    EXPECT_EQ(10 * param_count(NeuronKind::psn, 4), 200u);
}

TEST(Spikes, BinaryForEveryParallelKind)
{
    Rng rng(2);
    auto x = oracle::random_tensor<float>({16, 20}, 2);
    auto mp = MaskedPSNParams<float>::init(16, 4, rng);
    mp.lambda = 0.4;
    for (const auto& s : {psn_forward(x, PSNParams<float>::init(16, rng)).s, masked_psn_forward(x, mp).s,
                          spsn_forward(x, SlidingPSNParams<float>::init(5)).s})
        for (float v : s.data())
            EXPECT_TRUE(v == 0.0f || v == 1.0f);
}

TEST(Gradients, PSNWeightsAndThresholds)
{
    const auto cfg = relaxed();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const std::size_t steps = 1 + seed % 6;
        auto p = PSNParams<double>::init(steps, rng);
        auto x = oracle::random_tensor<double>({steps, 3}, seed + 1);
        auto w = oracle::random_tensor<double>({steps, 3}, seed + 2);
        auto f = [&] { return sum(mul(psn_forward(x, p, cfg).s, w)).item(); };
        {
            Tape<double> tape;
            auto rec = tape.record();
            tape.backward(sum(mul(psn_forward(x, p, cfg).s, w)));
        }
        EXPECT_LT(oracle::max_rel_error(p.weight.grad(), oracle::finite_difference(p.weight, f)), 1e-3);
        EXPECT_LT(oracle::max_rel_error(p.threshold.grad(), oracle::finite_difference(p.threshold, f)), 1e-3);
    }
}

TEST(Gradients, SlidingWeightsAndThreshold)
{
    const auto cfg = relaxed();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const std::size_t order = 1 + seed % 5;
        auto p = SlidingPSNParams<double>::init(order);
        auto x = oracle::random_tensor<double>({7, 2}, seed + 1);
        auto w = oracle::random_tensor<double>({7, 2}, seed + 2);
        auto f = [&] { return sum(mul(spsn_forward(x, p, cfg).s, w)).item(); };
        {
            Tape<double> tape;
            auto rec = tape.record();
            tape.backward(sum(mul(spsn_forward(x, p, cfg).s, w)));
        }
        EXPECT_LT(oracle::max_rel_error(p.weight.grad(), oracle::finite_difference(p.weight, f)), 1e-3);
        EXPECT_LT(oracle::max_rel_error(p.threshold.grad(), oracle::finite_difference(p.threshold, f)), 1e-3);
    }
}
