#pragma once

// Work-efficient (up-sweep / down-sweep) scans over the leading time axis of a
// [T, ...] tensor, used to evaluate reset-free IF and LIF charging in
// O(log T) depth:
//
//   IF :  h[t] = sum_{i<=t} x[i]
//   LIF:  h[t] = a^{t+1} h_init + b * sum_{i<=t} a^{t-i} x[i]
//
// Elements are pairs (a, c) combined by (a1, c1) o (a2, c2) = (a1 a2, a2 c1 + c2).
// The decay is a scalar, so the `a` half of every pair only depends on the
// position and the sweeps run over whole contiguous rows.

#include <atomic>
#include <bit>
#include <cstddef>
#include <vector>

#include "psn/ops.hpp"
#include "psn/tensor.hpp"

namespace psn::scan {

struct LinearRecurrence {
    double decay = 1.0;
    double input_gain = 1.0;
    double initial_state = 0.0;

    static LinearRecurrence integrate() { return {1.0, 1.0, 0.0}; }

    /// Leaky charge with membrane time constant tau_m > 1.
    static LinearRecurrence leaky(double tau_m)
    {
        if (!(tau_m > 1.0))
            throw ContractError("LIF recurrence needs tau_m > 1, got " + std::to_string(tau_m));
        return {1.0 - 1.0 / tau_m, 1.0 / tau_m, 0.0};
    }
};

/// One scan element.
struct Affine {
    double a = 1.0;
    double c = 0.0;
};

namespace testing {
/// Fault-injection hook: when set, combine drops the left carry.
inline std::atomic<bool>& corrupt_combine()
{
    static std::atomic<bool> flag{false};
    return flag;
}
} // namespace testing

/// Earlier element on the left.
inline Affine combine(Affine left, Affine right) noexcept
{
    if (testing::corrupt_combine().load(std::memory_order_relaxed))
        return {left.a * right.a, right.c};
    return {left.a * right.a, right.a * left.c + right.c};
}

/// Instrumentation of one scan call, counted in position-level combines.
struct ScanStats {
    std::size_t combines = 0;
    std::size_t levels = 0;
    std::size_t padded_length = 0;
};

namespace detail {

/// Inclusive scan of rows of `x` ([steps x width], row-major) into `out`.
template <class T>
void blelloch_rows(const T* x, T* out, std::size_t steps, std::size_t width, double a, double b, double h_init,
                   bool reversed, ScanStats* stats)
{
    const std::size_t padded = std::bit_ceil(steps);
    std::vector<double> coef(padded, 1.0);
    memory::Buffer<double> carry(padded * width, 0.0);
    auto src_row = [&](std::size_t t) { return reversed ? x + (steps - 1 - t) * width : x + t * width; };

    for (std::size_t t = 0; t < steps; ++t) {
        coef[t] = a;
        const T* xr = src_row(t);
        double* cr = carry.data() + t * width;
        for (std::size_t j = 0; j < width; ++j)
            cr[j] = b * static_cast<double>(xr[j]);
    }

    ScanStats local;
    local.padded_length = padded;
    auto apply = [&](std::size_t l, std::size_t r) {
        // position r <- position l o position r
        const Affine head = combine({coef[l], 0.0}, {coef[r], 0.0});
        const bool broken = testing::corrupt_combine().load(std::memory_order_relaxed);
        double* cl = carry.data() + l * width;
        double* cr = carry.data() + r * width;
        const double ar = coef[r];
        parallel_for(width, [&](std::size_t j) { cr[j] = broken ? cr[j] : ar * cl[j] + cr[j]; });
        coef[r] = head.a;
        ++local.combines;
    };

    // up-sweep
    for (std::size_t stride = 1; stride < padded; stride *= 2) {
        for (std::size_t r = 2 * stride - 1; r < padded; r += 2 * stride)
            apply(r - stride, r);
        ++local.levels;
    }

    // down-sweep to an exclusive scan
    coef[padded - 1] = 1.0;
    std::fill_n(carry.data() + (padded - 1) * width, width, 0.0);
    for (std::size_t stride = padded / 2; stride >= 1; stride /= 2) {
        for (std::size_t r = 2 * stride - 1; r < padded; r += 2 * stride) {
            const std::size_t l = r - stride;
            // new_left = prefix before block; new_right = prefix o left-half total
            std::swap(coef[l], coef[r]);
            double* cl = carry.data() + l * width;
            double* cr = carry.data() + r * width;
            for (std::size_t j = 0; j < width; ++j)
                std::swap(cl[j], cr[j]);
            apply(l, r);
        }
        ++local.levels;
    }

    // inclusive = exclusive o own element, then add the initial state term
    for (std::size_t t = 0; t < steps; ++t) {
        const double* cr = carry.data() + t * width;
        const T* xr = src_row(t);
        T* orow = reversed ? out + (steps - 1 - t) * width : out + t * width;
        const double decay_to_t = coef[t] * a;
        for (std::size_t j = 0; j < width; ++j) {
            const Affine incl = combine({coef[t], cr[j]}, {a, b * static_cast<double>(xr[j])});
            orow[j] = static_cast<T>(incl.c + decay_to_t * h_init);
        }
    }

    if (stats) {
        stats->combines += local.combines;
        stats->levels += local.levels;
        stats->padded_length = local.padded_length;
    }
}

} // namespace detail

/// h[t] = b * sum_{i<=t} a^{t-i} x[i] + a^{t+1} h_init along axis 0.
/// Differentiable in x: dL/dx[i] = b * sum_{t>=i} a^{t-i} dL/dh[t], computed by
/// the same scan run over the reversed time axis.
template <class T>
Tensor<T> linrec_scan(const Tensor<T>& x, const LinearRecurrence& rec, ScanStats* stats = nullptr)
{
    if (x.rank() < 1 || x.dim(0) < 1)
        throw DimensionError("scan needs a leading time axis, got " + shape_str(x.shape()));
    const std::size_t steps = x.dim(0);
    const std::size_t width = x.numel() / steps;
    auto out = Tensor<T>::uninitialized(x.shape());
    detail::blelloch_rows(x.data().data(), out.node()->data(), steps, width, rec.decay, rec.input_gain,
                          rec.initial_state, false, stats);

    psn::detail::record<T>(out, {&x}, [steps, width, rec](const auto& in, psn::detail::Node<T>& o) {
        auto g = o.grad_view();
        memory::Buffer<T> gx(g.size());
        detail::blelloch_rows(g.data(), gx.data(), steps, width, rec.decay, rec.input_gain, 0.0, true, nullptr);
        auto dst = in[0]->grad_span();
        for (std::size_t i = 0; i < dst.size(); ++i)
            dst[i] += gx[i];
    });
    return out;
}

/// Running sum along axis 0.
template <class T>
Tensor<T> prefix_sum(const Tensor<T>& x, ScanStats* stats = nullptr)
{
    return linrec_scan(x, LinearRecurrence::integrate(), stats);
}

} // namespace psn::scan
