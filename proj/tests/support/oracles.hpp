#pragma once

// Independent reference computations used by the test suites. Nothing here
// calls into the scan or neuron kernels under test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "psn/tensor.hpp"

namespace psn::oracle {

/// Central finite difference of `loss` w.r.t. every entry of `param`.
inline std::vector<double> finite_difference(Tensor<double>& param, const std::function<double()>& loss,
                                             double eps = 1e-3)
{
    std::vector<double> g(param.numel());
    for (std::size_t i = 0; i < param.numel(); ++i) {
        const double orig = param.data()[i];
        param.mutable_data()[i] = orig + eps;
        const double up = loss();
        param.mutable_data()[i] = orig - eps;
        const double down = loss();
        param.mutable_data()[i] = orig;
        g[i] = (up - down) / (2.0 * eps);
    }
    return g;
}

/// Relative error with a small absolute floor so exact zeros compare cleanly.
inline double rel_error(double analytic, double numeric)
{
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
    return std::abs(analytic - numeric) / scale;
}

inline double max_rel_error(std::span<const double> analytic, const std::vector<double>& numeric)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i)
        worst = std::max(worst, rel_error(analytic.empty() ? 0.0 : analytic[i], numeric[i]));
    return worst;
}

/// Plain loop cumulative sum over the leading axis, 64-bit accumulation.
inline std::vector<double> serial_cumsum(std::span<const float> x, std::size_t steps, std::size_t width)
{
    std::vector<double> out(x.size());
    for (std::size_t n = 0; n < width; ++n) {
        double acc = 0.0;
        for (std::size_t t = 0; t < steps; ++t) {
            acc += x[t * width + n];
            out[t * width + n] = acc;
        }
    }
    return out;
}

/// h[t] = a h[t-1] + b x[t] with h[-1] = h0, iterated directly.
inline std::vector<double> serial_recurrence(std::span<const float> x, std::size_t steps, std::size_t width, double a,
                                             double b, double h0 = 0.0)
{
    std::vector<double> out(x.size());
    for (std::size_t n = 0; n < width; ++n) {
        double h = h0;
        for (std::size_t t = 0; t < steps; ++t) {
            h = a * h + b * x[t * width + n];
            out[t * width + n] = h;
        }
    }
    return out;
}

/// Mask entry by the index predicate j <= i <= j + k - 1.
inline bool mask_predicate(std::size_t i, std::size_t j, std::size_t k) { return j <= i && i <= j + k - 1; }

template <class T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -2.0, double hi = 2.0)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor<T> t(std::move(shape));
    for (auto& v : t.mutable_data())
        v = static_cast<T>(dist(rng));
    return t;
}

} // namespace psn::oracle
