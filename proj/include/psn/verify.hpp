#pragma once

// Self-check suites: equivalence, causality and gradient oracles that can be
// run from the command line. Every failure carries a reproducing witness.

#include <cmath>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "psn/psn_family.hpp"

namespace psn::verify {

struct SuiteResult {
    std::string name;
    bool passed = true;
    std::size_t cases = 0;
    std::string witness;  // first failing case
};

struct Grid {
    std::size_t t_min = 2, t_max = 64;
    std::vector<std::size_t> n_values{1, 16, 256};
    std::size_t seeds = 10;
    std::size_t grad_instances = 20;
};

inline const std::vector<std::string>& suite_names()
{
    static const std::vector<std::string> names{"serial_parallel", "psn_subsumption", "mask_causality",
                                                "sliding_paths", "grad"};
    return names;
}

namespace detail {

template <class T>
Tensor<T> uniform(Shape shape, std::uint64_t seed, double lo = -2.0, double hi = 2.0)
{
    Rng rng(seed);
    std::uniform_real_distribution<double> d(lo, hi);
    Tensor<T> x(std::move(shape));
    for (auto& v : x.mutable_data())
        v = static_cast<T>(d(rng));
    return x;
}

inline std::uint64_t case_seed(std::size_t t, std::size_t n, std::size_t s) { return (t * 1000003u + n) * 1009u + s; }

/// Records the first failure and keeps counting cases.
struct Check {
    SuiteResult& r;
    void operator()(bool ok, const std::function<std::string()>& describe)
    {
        ++r.cases;
        if (!ok && r.passed) {
            r.passed = false;
            r.witness = describe();
        }
    }
};

inline std::string fmt(double v)
{
    std::ostringstream o;
    o.precision(9);
    o << v;
    return o.str();
}

/// Central differences; relative error uses a 1e-3 absolute floor.
inline double max_fd_error(Tensor<double>& param, std::span<const double> analytic, const std::function<double()>& f,
                           double eps = 1e-3)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < param.numel(); ++i) {
        const double orig = param.data()[i];
        param.mutable_data()[i] = orig + eps;
        const double up = f();
        param.mutable_data()[i] = orig - eps;
        const double down = f();
        param.mutable_data()[i] = orig;
        const double num = (up - down) / (2.0 * eps);
        const double a = analytic.empty() ? 0.0 : analytic[i];
        worst = std::max(worst, std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-3}));
    }
    return worst;
}

} // namespace detail

/// Reset-free IF and LIF: serial loop vs scan. H within 1e-5; spikes must
/// agree wherever H is farther than 1e-5 from the threshold.
inline SuiteResult serial_parallel(const Grid& g)
{
    SuiteResult r{"serial_parallel"};
    detail::Check check{r};
    const VanillaNeuronParams kinds[] = {VanillaNeuronParams::if_neuron(ResetMode::none),
                                         VanillaNeuronParams::lif(2.0, ResetMode::none)};
    for (std::size_t t = g.t_min; t <= g.t_max; ++t)
        for (auto n : g.n_values)
            for (std::size_t s = 0; s < g.seeds; ++s) {
                const auto seed = detail::case_seed(t, n, s);
                auto x = detail::uniform<float>({t, n}, seed);
                for (const auto& p : kinds) {
                    auto a = vanilla_sequence(x, p);
                    auto b = parallel_no_reset(x, p);
                    std::size_t bad = x.numel();
                    for (std::size_t i = 0; i < x.numel() && bad == x.numel(); ++i) {
                        const bool h_ok = std::abs(a.h[i] - b.h[i]) <= 1e-5f;
                        const bool s_ok = a.s[i] == b.s[i] || std::abs(a.h[i] - static_cast<float>(p.v_th)) <= 1e-5f;
                        if (!h_ok || !s_ok)
                            bad = i;
                    }
                    check(bad == x.numel(), [&] {
                        return std::string(p.charge == Charge::integrate ? "IF" : "LIF") + " T=" + std::to_string(t)
                               + " N=" + std::to_string(n) + " seed=" + std::to_string(seed) + " index="
                               + std::to_string(bad) + " serial=" + detail::fmt(a.h[bad])
                               + " parallel=" + detail::fmt(b.h[bad]);
                    });
                }
            }
    return r;
}

inline PSNParams<float> psn_with_weights(std::size_t steps, double tau, double threshold)
{
    PSNParams<float> p{Tensor<float>({steps, steps}), Tensor<float>({steps}, static_cast<float>(threshold))};
    auto w = p.weight.mutable_data();
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t i = 0; i <= t; ++i)
            w[t * steps + i] = tau <= 0.0 ? 1.0f
                                          : static_cast<float>((1.0 / tau) * std::pow(1.0 - 1.0 / tau, double(t - i)));
    return p;
}

/// PSN with IF / LIF weight matrices vs the reset-free scan: spikes
/// bit-identical, H within 1e-5.
inline SuiteResult psn_subsumption(const Grid& g)
{
    SuiteResult r{"psn_subsumption"};
    detail::Check check{r};
    for (std::size_t t = std::max<std::size_t>(1, g.t_min); t <= g.t_max; ++t)
        for (std::size_t variant = 0; variant < 2; ++variant) {
            const bool leaky = variant == 1;
            const auto psn = psn_with_weights(t, leaky ? 2.0 : 0.0, 1.0);
            const auto ref = leaky ? VanillaNeuronParams::lif(2.0, ResetMode::none)
                                   : VanillaNeuronParams::if_neuron(ResetMode::none);
            for (auto n : g.n_values)
                for (std::size_t s = 0; s < g.seeds; ++s) {
                    const auto seed = detail::case_seed(t, n, s) + 7;
                    auto x = detail::uniform<float>({t, n}, seed);
                    auto a = psn_forward(x, psn);
                    auto b = parallel_no_reset(x, ref);
                    std::size_t bad = x.numel();
                    for (std::size_t i = 0; i < x.numel() && bad == x.numel(); ++i)
                        if (std::abs(a.h[i] - b.h[i]) > 1e-5f || a.s[i] != b.s[i])
                            bad = i;
                    check(bad == x.numel(), [&] {
                        return std::string(leaky ? "LIF" : "IF") + " weights T=" + std::to_string(t) + " N="
                               + std::to_string(n) + " seed=" + std::to_string(seed) + " index=" + std::to_string(bad)
                               + " psn=" + detail::fmt(a.h[bad]) + " scan=" + detail::fmt(b.h[bad]);
                    });
                }
        }
    return r;
}

/// Mask entries against the index predicate for T <= 8, and exact
/// insensitivity of H[t] to inputs outside the causal window at lambda = 1.
inline SuiteResult mask_causality(const Grid& g)
{
    SuiteResult r{"mask_causality"};
    detail::Check check{r};
    for (std::size_t t = 1; t <= 8; ++t)
        for (std::size_t k = 1; k <= t; ++k) {
            auto m = build_mask<float>(t, k);
            for (std::size_t i = 0; i < t; ++i)
                for (std::size_t j = 0; j < t; ++j) {
                    const bool want = j <= i && i <= j + k - 1;
                    check(m.at({i, j}) == (want ? 1.0f : 0.0f), [&] {
                        return "mask T=" + std::to_string(t) + " k=" + std::to_string(k) + " entry (" + std::to_string(i)
                               + "," + std::to_string(j) + ")";
                    });
                }
        }
    for (std::size_t t : {1u, 2u, 4u, 8u, 16u})
        for (std::size_t k : std::set<std::size_t>{1, std::min<std::size_t>(2, t), std::max<std::size_t>(1, t / 2), t}) {
            for (std::size_t s = 0; s < std::max<std::size_t>(1, g.seeds / 5); ++s) {
                const auto seed = detail::case_seed(t, k, s) + 11;
                Rng rng(seed);
                auto p = MaskedPSNParams<float>::init(t, k, rng);
                p.lambda = 1.0;
                const std::size_t n = 4;
                auto x = detail::uniform<float>({t, n}, seed);
                auto base = masked_psn_forward(x, p).h;
                for (std::size_t i = 0; i < t; ++i) {
                    auto xp = x.clone();
                    for (std::size_t c = 0; c < n; ++c)
                        xp.mutable_data()[i * n + c] += 1.5f;
                    auto moved = masked_psn_forward(xp, p).h;
                    for (std::size_t row = 0; row < t; ++row) {
                        if (i <= row && i + k >= row + 1)
                            continue;
                        bool same = true;
                        for (std::size_t c = 0; c < n; ++c)
                            same &= base.at({row, c}) == moved.at({row, c});
                        check(same, [&] {
                            return "causality T=" + std::to_string(t) + " k=" + std::to_string(k) + " seed="
                                   + std::to_string(seed) + " perturbed X[" + std::to_string(i) + "] moved H["
                                   + std::to_string(row) + "]";
                        });
                    }
                }
            }
        }
    return r;
}

/// Sliding PSN matmul path vs convolution path within 1e-6, and the
/// hand-expanded banded matrix.
inline SuiteResult sliding_paths(const Grid& g)
{
    SuiteResult r{"sliding_paths"};
    detail::Check check{r};
    {
        SlidingPSNParams<float> p{Tensor<float>({2}, {2.0f, 3.0f}), Tensor<float>({1}, {1.0f})};
        check(spsn_build_A(p, 3).to_vector() == std::vector<float>{3, 0, 0, 2, 3, 0, 0, 2, 3},
              [] { return std::string("build_A k=2 T=3 hand example"); });
        check(spsn_build_A(p, 2).to_vector() == std::vector<float>{3, 0, 2, 3},
              [] { return std::string("build_A k=2 T=2 hand example"); });
        SlidingPSNParams<float> one{Tensor<float>({1}, {0.5f}), Tensor<float>({1}, {1.0f})};
        check(spsn_build_A(one, 2).to_vector() == std::vector<float>{0.5f, 0, 0, 0.5f},
              [] { return std::string("build_A k=1 hand example"); });
    }
    for (std::size_t t = 1; t <= g.t_max; ++t) {
        for (std::size_t k : {std::size_t{1}, std::size_t{2}, std::size_t{4}, std::size_t{8}, t}) {
            const auto seed = detail::case_seed(t, k, 0) + 13;
            SlidingPSNParams<float> p{detail::uniform<float>({k}, seed, -1.0, 1.0), Tensor<float>({1}, 1.0f)};
            auto x = detail::uniform<float>({t, 16}, seed + 1);
            auto a = spsn_forward(x, p, {}, SlidingPath::matmul).h;
            auto b = spsn_forward(x, p, {}, SlidingPath::conv).h;
            double worst = 0.0;
            for (std::size_t i = 0; i < x.numel(); ++i)
                worst = std::max(worst, static_cast<double>(std::abs(a[i] - b[i])));
            check(worst <= 1e-6, [&] {
                return "T=" + std::to_string(t) + " k=" + std::to_string(k) + " seed=" + std::to_string(seed)
                       + " max |matmul - conv| = " + detail::fmt(worst);
            });
        }
    }
    return r;
}

/// Relaxed-forward finite differences (64-bit) for every learnable
/// parameter of every layer kind, plus the input gradient of vanilla kinds.
inline SuiteResult grad(const Grid& g)
{
    SuiteResult r{"grad"};
    detail::Check check{r};
    SurrogateConfig cfg;
    cfg.relaxed = true;
    const double tol = 1e-3;
    auto run = [&](const std::string& what, std::uint64_t seed, Tensor<double>& param,
                   const std::function<Tensor<double>()>& spikes, const Tensor<double>& weights) {
        param.zero_grad();
        {
            Tape<double> tape;
            auto guard = tape.record();
            tape.backward(sum(mul(spikes(), weights)));
        }
        const auto analytic = param.grad();
        std::vector<double> copy(analytic.begin(), analytic.end());
        const double err = detail::max_fd_error(param, copy, [&] { return sum(mul(spikes(), weights)).item(); });
        check(err < tol, [&] {
            return what + " seed=" + std::to_string(seed) + " max rel error " + detail::fmt(err);
        });
    };
    for (std::size_t inst = 0; inst < g.grad_instances; ++inst) {
        const std::uint64_t seed = 5000 + inst;
        const std::size_t t = 1 + inst % 6, n = 3;
        auto x = detail::uniform<double>({t, n}, seed);
        auto w = detail::uniform<double>({t, n}, seed + 1);
        Rng rng(seed);
        {
            auto p = PSNParams<double>::init(t, rng);
            auto f = [&] { return psn_forward(x, p, cfg).s; };
            run("psn.weight", seed, p.weight, f, w);
            run("psn.threshold", seed, p.threshold, f, w);
        }
        {
            auto p = MaskedPSNParams<double>::init(t, 1 + inst % t, rng);
            p.lambda = static_cast<double>(inst % 5) / 4.0;
            auto f = [&] { return masked_psn_forward(x, p, cfg).s; };
            run("masked_psn.weight", seed, p.weight, f, w);
            run("masked_psn.threshold", seed, p.threshold, f, w);
        }
        {
            auto p = SlidingPSNParams<double>::init(1 + inst % 4);
            auto f = [&] { return spsn_forward(x, p, cfg).s; };
            run("sliding_psn.weight", seed, p.weight, f, w);
            run("sliding_psn.threshold", seed, p.threshold, f, w);
        }
        for (auto kind : {NeuronKind::if_neuron, NeuronKind::lif, NeuronKind::if_no_reset, NeuronKind::lif_no_reset}) {
            auto p = default_vanilla(kind);
            auto xi = detail::uniform<double>({t, n}, seed + 2, -0.5, 1.5);
            xi.set_requires_grad();
            auto f = [&] { return vanilla_sequence(xi, p, cfg).s; };
            run(std::string(to_string(kind)) + ".input", seed, xi, f, w);
        }
    }
    return r;
}

inline SuiteResult run_suite(const std::string& name, const Grid& g)
{
    if (name == "serial_parallel")
        return serial_parallel(g);
    if (name == "psn_subsumption")
        return psn_subsumption(g);
    if (name == "mask_causality")
        return mask_causality(g);
    if (name == "sliding_paths")
        return sliding_paths(g);
    if (name == "grad")
        return grad(g);
    throw ContractError("unknown verify suite '" + name + "'");
}

} // namespace psn::verify
