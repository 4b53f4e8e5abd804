#pragma once

// Parallel spiking neurons: hidden states for every time step come from one
// linear map over the whole input sequence, H = W X, followed by S = Theta(H - B).
//
//   PSN          W in R^{TxT}, B in R^T
//   masked PSN   (W o M_k(lambda)) with a banded causal mask of order k
//   sliding PSN  a length-k kernel shared across time, learnable scalar V_th

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <string_view>

#include "psn/ops.hpp"
#include "psn/surrogate.hpp"
#include "psn/vanilla.hpp"

namespace psn {

enum class NeuronKind { if_neuron, lif, if_no_reset, lif_no_reset, psn, masked_psn, sliding_psn };

inline std::string_view to_string(NeuronKind k)
{
    switch (k) {
    case NeuronKind::if_neuron: return "if";
    case NeuronKind::lif: return "lif";
    case NeuronKind::if_no_reset: return "if-no-reset";
    case NeuronKind::lif_no_reset: return "lif-no-reset";
    case NeuronKind::psn: return "psn";
    case NeuronKind::masked_psn: return "masked-psn";
    case NeuronKind::sliding_psn: return "spsn";
    }
    return "?";
}

inline NeuronKind parse_neuron_kind(std::string_view s)
{
    for (auto k : {NeuronKind::if_neuron, NeuronKind::lif, NeuronKind::if_no_reset, NeuronKind::lif_no_reset,
                   NeuronKind::psn, NeuronKind::masked_psn, NeuronKind::sliding_psn})
        if (to_string(k) == s)
            return k;
    throw ContractError("unknown neuron kind '" + std::string(s) + "'");
}

inline bool is_parallel_family(NeuronKind k)
{
    return k == NeuronKind::psn || k == NeuronKind::masked_psn || k == NeuronKind::sliding_psn;
}

/// Vanilla parameters implied by a neuron kind name (reset variants use
/// hard reset; callers may override).
inline VanillaNeuronParams default_vanilla(NeuronKind kind)
{
    switch (kind) {
    case NeuronKind::if_neuron: return VanillaNeuronParams::if_neuron(ResetMode::hard);
    case NeuronKind::if_no_reset: return VanillaNeuronParams::if_neuron(ResetMode::none);
    case NeuronKind::lif_no_reset: return VanillaNeuronParams::lif(2.0, ResetMode::none);
    default: return VanillaNeuronParams::lif(2.0, ResetMode::hard);
    }
}

/// Learnable parameters added by one neuron layer. The mask of the masked
/// PSN is not a parameter; vanilla neurons have none.
inline std::size_t param_count(NeuronKind kind, std::size_t steps, std::size_t order = 0)
{
    switch (kind) {
    case NeuronKind::psn:
    case NeuronKind::masked_psn: return steps * steps + steps;
    case NeuronKind::sliding_psn: return order + 1;
    default: return 0;
    }
}

using Rng = std::mt19937_64;

/// Kaiming-uniform with negative slope sqrt(5): U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <class T>
void kaiming_uniform(Tensor<T>& w, std::size_t fan_in, Rng& rng)
{
    const double gain = std::sqrt(2.0 / (1.0 + 5.0));
    const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : w.mutable_data())
        v = static_cast<T>(dist(rng));
}

// ---------------------------------------------------------------------------
// PSN

template <class T>
struct PSNParams {
    Tensor<T> weight;     // [T, T]
    Tensor<T> threshold;  // [T]

    std::size_t steps() const { return weight.dim(0); }

    static PSNParams init(std::size_t steps, Rng& rng)
    {
        PSNParams p{Tensor<T>({steps, steps}), Tensor<T>({steps}, T(1))};
        kaiming_uniform(p.weight, steps, rng);
        p.weight.set_requires_grad();
        p.threshold.set_requires_grad();
        return p;
    }
};

namespace detail {

template <class T>
void check_square(const Tensor<T>& w, const Tensor<T>& b, const Tensor<T>& x)
{
    if (w.rank() != 2 || w.dim(0) != w.dim(1))
        throw DimensionError("PSN weight must be square, got " + shape_str(w.shape()));
    if (b.rank() != 1 || b.dim(0) != w.dim(0))
        throw DimensionError("PSN threshold " + shape_str(b.shape()) + " does not match weight " + shape_str(w.shape()));
    if (x.rank() < 1 || x.dim(0) != w.dim(0))
        throw DimensionError("input " + shape_str(x.shape()) + " has wrong time extent for weight "
                             + shape_str(w.shape()));
}

/// H = W X with X flattened to [T, rest]; result keeps x's shape.
template <class T>
Tensor<T> mix_time(const Tensor<T>& w, const Tensor<T>& x)
{
    const std::size_t steps = x.dim(0);
    auto flat = reshape(x, {steps, x.numel() / steps});
    return reshape(matmul(w, flat), x.shape());
}

} // namespace detail

template <class T>
SpikeTrace<T> psn_forward(const Tensor<T>& x, const PSNParams<T>& p, const SurrogateConfig& cfg = {})
{
    detail::check_square(p.weight, p.threshold, x);
    SpikeTrace<T> trace;
    trace.h = detail::mix_time(p.weight, x);
    trace.s = heaviside_surrogate(trace.h, p.threshold, cfg);
    trace.firing_rate_per_layer = {spike_rate(trace.s)};
    return trace;
}

// ---------------------------------------------------------------------------
// masked PSN

/// Row i has ones at columns max(0, i-k+1) ..= i.
template <class T>
Tensor<T> build_mask(std::size_t steps, std::size_t order)
{
    if (order < 1 || order > steps)
        throw ContractError("mask order must lie in [1, " + std::to_string(steps) + "], got " + std::to_string(order));
    auto m = Tensor<T>::zeros({steps, steps});
    auto d = m.mutable_data();
    for (std::size_t i = 0; i < steps; ++i)
        for (std::size_t j = (i + 1 > order ? i + 1 - order : 0); j <= i; ++j)
            d[i * steps + j] = T(1);
    return m;
}

/// lambda * mask + (1 - lambda) * ones.
template <class T>
Tensor<T> blend_mask(const Tensor<T>& mask, double lambda)
{
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw ContractError("mask blend lambda must lie in [0, 1], got " + std::to_string(lambda));
    auto out = Tensor<T>::uninitialized(mask.shape());
    auto d = out.mutable_data();
    auto m = mask.data();
    for (std::size_t i = 0; i < d.size(); ++i)
        d[i] = static_cast<T>(lambda * static_cast<double>(m[i]) + (1.0 - lambda));
    return out;
}

/// Progressive masking: min(1, 8 * epoch / (epochs - 1)).
inline double lambda_schedule(int epoch, int epochs)
{
    if (epochs < 2 || epoch < 0 || epoch >= epochs)
        throw ContractError("lambda_schedule needs epochs >= 2 and 0 <= epoch < epochs");
    return std::min(1.0, 8.0 * static_cast<double>(epoch) / static_cast<double>(epochs - 1));
}

template <class T>
struct MaskedPSNParams {
    Tensor<T> weight;     // [T, T]
    Tensor<T> threshold;  // [T]
    std::size_t order = 1;
    double lambda = 1.0;  // schedule-driven, not learnable

    std::size_t steps() const { return weight.dim(0); }

    static MaskedPSNParams init(std::size_t steps, std::size_t order, Rng& rng)
    {
        auto base = PSNParams<T>::init(steps, rng);
        MaskedPSNParams p{base.weight, base.threshold, order, 1.0};
        build_mask<T>(steps, order);  // validates order
        return p;
    }

    /// Constant factor multiplying W.
    Tensor<T> effective_mask() const { return blend_mask(build_mask<T>(steps(), order), lambda); }
};

template <class T>
SpikeTrace<T> masked_psn_forward(const Tensor<T>& x, const MaskedPSNParams<T>& p, const SurrogateConfig& cfg = {})
{
    detail::check_square(p.weight, p.threshold, x);
    SpikeTrace<T> trace;
    trace.h = detail::mix_time(mul(p.weight, p.effective_mask()), x);
    trace.s = heaviside_surrogate(trace.h, p.threshold, cfg);
    trace.firing_rate_per_layer = {spike_rate(trace.s)};
    return trace;
}

// ---------------------------------------------------------------------------
// sliding PSN

template <class T>
struct SlidingPSNParams {
    Tensor<T> weight;     // [k], oldest -> newest
    Tensor<T> threshold;  // [1]

    std::size_t order() const { return weight.numel(); }

    /// W_i = 2^{i-k+1}, V_th = 1.
    static SlidingPSNParams init(std::size_t order)
    {
        if (order < 1)
            throw ContractError("sliding PSN order must be >= 1");
        SlidingPSNParams p{Tensor<T>({order}), Tensor<T>({1}, T(1))};
        auto w = p.weight.mutable_data();
        for (std::size_t i = 0; i < order; ++i)
            w[i] = static_cast<T>(std::ldexp(1.0, static_cast<int>(i) - static_cast<int>(order) + 1));
        p.weight.set_requires_grad();
        p.threshold.set_requires_grad();
        return p;
    }
};

/// Banded Toeplitz A[i][j] = W_{k-1-i+j} for i+1-k <= j <= i, else 0.
/// Differentiable in W.
template <class T>
Tensor<T> spsn_build_A(const SlidingPSNParams<T>& p, std::size_t steps)
{
    if (steps < 1)
        throw ContractError("sliding PSN needs T >= 1");
    const std::size_t k = p.order();
    auto a = Tensor<T>::zeros({steps, steps});
    T* pa = a.node()->data();
    const T* w = p.weight.data().data();
    for (std::size_t i = 0; i < steps; ++i)
        for (std::size_t d = 0; d < k && d <= i; ++d)
            pa[i * steps + (i - d)] = w[k - 1 - d];
    detail::record<T>(a, {&p.weight}, [steps, k](const auto& in, detail::Node<T>& o) {
        auto g = o.grad_view();
        auto gw = in[0]->grad_span();
        for (std::size_t i = 0; i < steps; ++i)
            for (std::size_t d = 0; d < k && d <= i; ++d)
                gw[k - 1 - d] += g[i * steps + (i - d)];
    });
    return a;
}

enum class SlidingPath { matmul, conv };

/// Forward-only sliding-window evaluation of H (zero history before t = 0),
/// accumulated in double like the matmul path.
template <class T>
Tensor<T> spsn_convolve(const Tensor<T>& x, const SlidingPSNParams<T>& p)
{
    if (x.rank() < 1 || x.dim(0) < 1)
        throw DimensionError("sliding PSN needs x[T, ...], got " + shape_str(x.shape()));
    const std::size_t steps = x.dim(0);
    const std::size_t width = x.numel() / steps;
    const std::size_t k = p.order();
    const T* w = p.weight.data().data();
    const T* px = x.data().data();
    auto h = Tensor<T>::uninitialized(x.shape());
    T* ph = h.node()->data();
    std::vector<double> acc(width);
    for (std::size_t t = 0; t < steps; ++t) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t i = 0; i < k; ++i) {
            if (t + 1 + i < k)
                continue;  // X[j] = 0 for j < 0
            const double wi = w[i];
            const T* xr = px + (t + 1 + i - k) * width;
            for (std::size_t n = 0; n < width; ++n)
                acc[n] += wi * static_cast<double>(xr[n]);
        }
        for (std::size_t n = 0; n < width; ++n)
            ph[t * width + n] = static_cast<T>(acc[n]);
    }
    return h;
}

/// T is read from x, so any sequence length works. Only the matmul path
/// records on the tape.
template <class T>
SpikeTrace<T> spsn_forward(const Tensor<T>& x, const SlidingPSNParams<T>& p, const SurrogateConfig& cfg = {},
                           SlidingPath path = SlidingPath::matmul)
{
    if (x.rank() < 1 || x.dim(0) < 1)
        throw DimensionError("sliding PSN needs x[T, ...], got " + shape_str(x.shape()));
    SpikeTrace<T> trace;
    if (path == SlidingPath::matmul) {
        trace.h = detail::mix_time(spsn_build_A(p, x.dim(0)), x);
        trace.s = heaviside_surrogate(trace.h, p.threshold, cfg);
    } else {
        trace.h = spsn_convolve(x, p);
        trace.s = heaviside_surrogate(trace.h, p.threshold.detach(), cfg);
    }
    trace.firing_rate_per_layer = {spike_rate(trace.s)};
    return trace;
}

} // namespace psn
