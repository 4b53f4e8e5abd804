#pragma once

// Vanilla charge / fire / reset neurons, plus their reset-free parallel form.

#include <memory>
#include <string>
#include <vector>

#include "psn/ops.hpp"
#include "psn/scan.hpp"
#include "psn/surrogate.hpp"

namespace psn {

enum class ResetMode { hard, soft, none };
enum class Charge { integrate, leaky };

struct VanillaNeuronParams {
    Charge charge = Charge::leaky;
    double tau_m = 2.0;  // unused for Charge::integrate
    double v_th = 1.0;
    double v_reset = 0.0;
    ResetMode reset = ResetMode::hard;
    bool detach_reset = false;

    static VanillaNeuronParams if_neuron(ResetMode r = ResetMode::hard)
    {
        VanillaNeuronParams p;
        p.charge = Charge::integrate;
        p.reset = r;
        return p;
    }

    static VanillaNeuronParams lif(double tau_m = 2.0, ResetMode r = ResetMode::hard)
    {
        VanillaNeuronParams p;
        p.tau_m = tau_m;
        p.reset = r;
        return p;
    }

    void validate() const
    {
        if (charge == Charge::leaky && !(tau_m > 1.0))
            throw ContractError("LIF needs tau_m > 1, got " + std::to_string(tau_m));
        if (reset == ResetMode::hard && !(v_th > v_reset))
            throw ContractError("hard reset needs v_th > v_reset");
    }
};

/// H and S for one layer over T steps. H may be left undefined when the
/// caller did not ask for it.
template <class T>
struct SpikeTrace {
    Tensor<T> h;
    Tensor<T> s;
    std::vector<double> firing_rate_per_layer;

    double firing_rate() const { return firing_rate_per_layer.empty() ? 0.0 : firing_rate_per_layer.back(); }
};

template <class T>
double spike_rate(const Tensor<T>& s)
{
    double acc = 0.0;
    for (T v : s.data())
        acc += static_cast<double>(v);
    return s.numel() ? acc / static_cast<double>(s.numel()) : 0.0;
}

/// Reset fused into one op:
///   hard: v = h (1 - s) + v_reset s
///   soft: v = h - v_th s
/// With `detach` the spike inside the reset gets no gradient.
template <class T>
Tensor<T> reset_potential(const Tensor<T>& h, const Tensor<T>& s, const VanillaNeuronParams& p)
{
    if (h.shape() != s.shape())
        throw DimensionError("reset shape mismatch: " + shape_str(h.shape()) + " vs " + shape_str(s.shape()));
    const bool hard = p.reset == ResetMode::hard;
    const T v_th = static_cast<T>(p.v_th);
    const T v_reset = static_cast<T>(p.v_reset);
    auto out = Tensor<T>::uninitialized(h.shape());
    const T* ph = h.data().data();
    const T* ps = s.data().data();
    T* po = out.node()->data();
    parallel_for(h.numel(), [&](std::size_t i) {
        po[i] = hard ? ph[i] * (T(1) - ps[i]) + v_reset * ps[i] : ph[i] - v_th * ps[i];
    });
    const bool detach = p.detach_reset;
    detail::record<T>(out, {&h, &s}, [hard, v_th, v_reset, detach](const auto& in, detail::Node<T>& o) {
        auto g = o.grad_view();
        const T* hh = in[0]->data();
        const T* ss = in[1]->data();
        if (in[0]->requires_grad) {
            auto gh = in[0]->grad_span();
            for (std::size_t i = 0; i < g.size(); ++i)
                gh[i] += hard ? g[i] * (T(1) - ss[i]) : g[i];
        }
        if (!detach && in[1]->requires_grad) {
            auto gs = in[1]->grad_span();
            for (std::size_t i = 0; i < g.size(); ++i)
                gs[i] += hard ? g[i] * (v_reset - hh[i]) : -v_th * g[i];
        }
    });
    return out;
}

/// `v` is the differentiable potential; `exact` mirrors it in double so the
/// serial recurrence accumulates with the same precision as the scan.
template <class T>
struct VanillaState {
    Tensor<T> v;
    std::shared_ptr<const std::vector<double>> exact;
};

template <class T>
struct StepOutput {
    Tensor<T> s;
    Tensor<T> h;
    VanillaState<T> state;
};

/// Initial state H[-1] = 0 for neurons shaped like `like`.
template <class T>
VanillaState<T> resting_state(const Shape& like)
{
    auto v = Tensor<T>::zeros(like);
    return {v, std::make_shared<const std::vector<double>>(v.numel(), 0.0)};
}

/// One charge / fire / reset step.
template <class T>
StepOutput<T> vanilla_step(const Tensor<T>& x_t, const VanillaState<T>& state, const VanillaNeuronParams& p,
                           const SurrogateConfig& cfg = {})
{
    if (x_t.shape() != state.v.shape())
        throw DimensionError("state " + shape_str(state.v.shape()) + " does not match input " + shape_str(x_t.shape()));
    const double decay = p.charge == Charge::integrate ? 1.0 : 1.0 - 1.0 / p.tau_m;
    const double gain = p.charge == Charge::integrate ? 1.0 : 1.0 / p.tau_m;
    Tensor<T> h = p.charge == Charge::integrate ? add(state.v, x_t)
                                                : axpby(state.v, x_t, static_cast<T>(decay), static_cast<T>(gain));
    const std::size_t n = h.numel();
    std::vector<double> prev = state.exact && state.exact->size() == n
                                   ? *state.exact
                                   : std::vector<double>(state.v.data().begin(), state.v.data().end());
    auto exact = std::make_shared<std::vector<double>>(n);
    {
        const T* px = x_t.data().data();
        T* ph = h.node()->data();
        for (std::size_t i = 0; i < n; ++i) {
            (*exact)[i] = decay * prev[i] + gain * static_cast<double>(px[i]);
            ph[i] = static_cast<T>((*exact)[i]);
        }
    }
    Tensor<T> s = heaviside_surrogate(h, static_cast<T>(p.v_th), cfg);
    Tensor<T> v = h;
    if (p.reset != ResetMode::none) {
        v = reset_potential(h, s, p);
        const T* ps = s.data().data();
        T* pv = v.node()->data();
        for (std::size_t i = 0; i < n; ++i) {
            const double fired = static_cast<double>(ps[i]);
            auto& e = (*exact)[i];
            e = p.reset == ResetMode::hard ? e * (1.0 - fired) + p.v_reset * fired : e - p.v_th * fired;
            pv[i] = static_cast<T>(e);
        }
    }
    return {std::move(s), std::move(h), {std::move(v), std::move(exact)}};
}

/// Serial O(T) simulation over x[T, ...].
template <class T>
SpikeTrace<T> vanilla_sequence(const Tensor<T>& x, const VanillaNeuronParams& p, const SurrogateConfig& cfg = {},
                               bool keep_potential = true)
{
    p.validate();
    if (x.rank() < 1 || x.dim(0) < 1)
        throw DimensionError("vanilla_sequence needs x[T, ...], got " + shape_str(x.shape()));
    const std::size_t steps = x.dim(0);
    Shape inner(x.shape().begin() + 1, x.shape().end());
    auto state = resting_state<T>(inner);
    std::vector<Tensor<T>> spikes;
    std::vector<Tensor<T>> potentials;
    spikes.reserve(steps);
    if (keep_potential)
        potentials.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        auto step_out = vanilla_step(row(x, t), state, p, cfg);
        spikes.push_back(std::move(step_out.s));
        if (keep_potential)
            potentials.push_back(std::move(step_out.h));
        state = std::move(step_out.state);
    }
    SpikeTrace<T> trace;
    trace.s = stack(spikes);
    if (keep_potential)
        trace.h = stack(potentials);
    trace.firing_rate_per_layer = {spike_rate(trace.s)};
    return trace;
}

/// Reset-free IF/LIF evaluated with a parallel scan over time.
template <class T>
SpikeTrace<T> parallel_no_reset(const Tensor<T>& x, const VanillaNeuronParams& p, const SurrogateConfig& cfg = {},
                                scan::ScanStats* stats = nullptr)
{
    if (p.reset != ResetMode::none)
        throw ContractError("reset is not parallelizable: the reset makes the charge recurrence nonlinear");
    p.validate();
    const auto rec = p.charge == Charge::integrate ? scan::LinearRecurrence::integrate()
                                                   : scan::LinearRecurrence::leaky(p.tau_m);
    SpikeTrace<T> trace;
    trace.h = scan::linrec_scan(x, rec, stats);
    trace.s = heaviside_surrogate(trace.h, static_cast<T>(p.v_th), cfg);
    trace.firing_rate_per_layer = {spike_rate(trace.s)};
    return trace;
}

} // namespace psn
