#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "psn/ops.hpp"
#include "psn/tensor.hpp"

namespace psn {

/// Arctan surrogate: sigma(x) = alpha / (2 (1 + (pi/2 alpha x)^2)).
struct SurrogateConfig {
    double alpha = 4.0;
    /// Replace the step by its smooth primitive atan(pi/2 alpha x)/pi + 1/2 in
    /// the forward pass. Only for gradient checking.
    bool relaxed = false;

    void validate() const
    {
        if (!(alpha > 0.0))
            throw ContractError("surrogate alpha must be positive, got " + std::to_string(alpha));
    }
};

inline double surrogate_grad(double x, double alpha) noexcept
{
    const double u = std::numbers::pi / 2.0 * alpha * x;
    return alpha / (2.0 * (1.0 + u * u));
}

inline double relaxed_step(double x, double alpha) noexcept
{
    return std::atan(std::numbers::pi / 2.0 * alpha * x) / std::numbers::pi + 0.5;
}

/// Heaviside step with Theta(0) = 1 (ties at threshold fire).
inline double step(double x) noexcept { return x >= 0.0 ? 1.0 : 0.0; }

namespace detail {

template <class T>
Tensor<T> fire(const Tensor<T>& h, const Tensor<T>* threshold, T constant, const SurrogateConfig& cfg)
{
    cfg.validate();
    std::size_t group = 0;  // elements sharing one threshold entry
    if (threshold) {
        if (threshold->numel() == 1)
            group = h.numel();
        else if (threshold->shape() == h.shape())
            group = 1;
        else if (threshold->rank() == 1 && h.rank() >= 1 && threshold->dim(0) == h.dim(0))
            group = slab_size(h.shape());
        else
            throw DimensionError("threshold " + shape_str(threshold->shape()) + " does not broadcast against "
                                 + shape_str(h.shape()));
    }

    auto out = Tensor<T>::uninitialized(h.shape());
    const T* ph = h.data().data();
    const T* pt = threshold ? threshold->data().data() : nullptr;
    T* po = out.node()->data();
    const bool relaxed = cfg.relaxed;
    const T alpha = static_cast<T>(cfg.alpha);
    parallel_for(h.numel(), [&](std::size_t i) {
        const T x = ph[i] - (pt ? pt[i / group] : constant);
        po[i] = relaxed ? static_cast<T>(relaxed_step(x, alpha)) : (x >= T(0) ? T(1) : T(0));
    });

    auto rule = [group, constant, alpha](const auto& in, Node<T>& o) {
        auto g = o.grad_view();
        const T* hh = in[0]->data();
        const T* tt = in.size() > 1 ? in[1]->data() : nullptr;
        std::span<T> gh = in[0]->requires_grad ? in[0]->grad_span() : std::span<T>{};
        std::span<T> gt = (tt && in[1]->requires_grad) ? in[1]->grad_span() : std::span<T>{};
        for (std::size_t i = 0; i < g.size(); ++i) {
            const T x = hh[i] - (tt ? tt[i / group] : constant);
            const T sg = static_cast<T>(surrogate_grad(x, alpha)) * g[i];
            if (!gh.empty())
                gh[i] += sg;
            if (!gt.empty())
                gt[i / group] -= sg;
        }
    };
    if (threshold)
        record<T>(out, {&h, threshold}, rule);
    else
        record<T>(out, {&h}, rule);
    return out;
}

} // namespace detail

/// S = Theta(h - threshold). `threshold` is a scalar-shaped tensor, one value
/// per leading index of h, or h-shaped. Backward uses the arctan surrogate and
/// sends -sigma to a learnable threshold.
template <class T>
Tensor<T> heaviside_surrogate(const Tensor<T>& h, const Tensor<T>& threshold, const SurrogateConfig& cfg = {})
{
    return detail::fire(h, &threshold, T(0), cfg);
}

/// Constant (non-learnable) threshold.
template <class T>
Tensor<T> heaviside_surrogate(const Tensor<T>& h, T threshold, const SurrogateConfig& cfg = {})
{
    return detail::fire<T>(h, nullptr, threshold, cfg);
}

} // namespace psn
