#pragma once

// Differentiable tensor operations used by the neuron layers and models.
// Every op allocates a fresh output; none mutates its inputs.

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "psn/parallel_for.hpp"
#include "psn/tensor.hpp"

namespace psn {

namespace detail {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;

template <class T>
Tensor<T> make_view(const Tensor<T>& src, Shape shape, std::size_t rel_offset)
{
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->storage = src.node()->storage;
    n->offset = src.node()->offset + rel_offset;
    Tensor<T> view(n);
    if (src.requires_grad() && Tape<T>::active()) {
        const auto& s = src.node();
        n->base = s->base ? s->base : s;
        n->base_offset = (s->base ? s->base_offset : 0) + rel_offset;
        // The view aliases its base's gradient, so no backward rule is needed.
        record<T>(view, {&src}, {});
    }
    return view;
}

inline std::size_t slab_size(const Shape& s) { return s.empty() ? 1 : shape_numel(s) / s[0]; }

/// Row-major C[m×n] = A[m×k] B[k×n] with double accumulators, rounded once,
/// so results agree with the double-precision scans to within one ulp. Work
/// is blocked over columns of B so a block stays in cache across rows of A.
template <class T>
void gemm_double_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n)
{
    constexpr std::size_t kBlock = 512;
    const std::size_t blocks = (n + kBlock - 1) / kBlock;
    auto body = [&](std::size_t blk) {
        const std::size_t lo = blk * kBlock, width = std::min(kBlock, n - lo);
        alignas(64) double acc[kBlock];
        for (std::size_t i = 0; i < m; ++i) {
            std::fill(acc, acc + width, 0.0);
            const T* ar = a + i * k;
            for (std::size_t p = 0; p < k; ++p) {
                const double w = static_cast<double>(ar[p]);
                if (w == 0.0)
                    continue;
                const T* br = b + p * n + lo;
                for (std::size_t j = 0; j < width; ++j)
                    acc[j] += w * static_cast<double>(br[j]);
            }
            T* cr = c + i * n + lo;
            for (std::size_t j = 0; j < width; ++j)
                cr[j] = static_cast<T>(acc[j]);
        }
    };
    const bool wide = blocks > 1 && m * k * n >= kParallelGrain;
    const auto nb = static_cast<std::ptrdiff_t>(blocks);
#if defined(_OPENMP)
#pragma omp parallel for schedule(static) if (wide)
#endif
    for (std::ptrdiff_t blk = 0; blk < nb; ++blk)
        body(static_cast<std::size_t>(blk));
    (void)wide;
}

} // namespace detail

/// C = A * B for A[M×K], B[K×N].
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b)
{
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const auto m = static_cast<Eigen::Index>(a.dim(0));
    const auto k = static_cast<Eigen::Index>(a.dim(1));
    const auto n = static_cast<Eigen::Index>(b.dim(1));
    auto out = Tensor<T>::uninitialized({a.dim(0), b.dim(1)});
    detail::gemm_double_acc(a.data().data(), b.data().data(), out.node()->data(), a.dim(0), a.dim(1), b.dim(1));

    detail::record<T>(out, {&a, &b}, [m, k, n](const auto& in, detail::Node<T>& o) {
        detail::ConstMatrixMap<T> gc(o.grad_view().data(), m, n);
        if (in[0]->requires_grad) {
            detail::MatrixMap<T> ga(in[0]->grad_span().data(), m, k);
            ga.noalias() += gc * detail::ConstMatrixMap<T>(in[1]->data(), k, n).transpose();
        }
        if (in[1]->requires_grad) {
            detail::MatrixMap<T> gb(in[1]->grad_span().data(), k, n);
            gb.noalias() += detail::ConstMatrixMap<T>(in[0]->data(), m, k).transpose() * gc;
        }
    });
    return out;
}

enum class Binary { add, sub, mul };

/// Pointwise a (op) b. `b` either matches `a` exactly or is a vector with one
/// entry per leading index of `a`, replicated along the remaining axes
/// (a threshold B[T] against H[T×N] subtracts B[t] from row t).
template <class T>
Tensor<T> elementwise(const Tensor<T>& a, const Tensor<T>& b, Binary kind)
{
    const bool same = a.shape() == b.shape();
    const bool per_row = !same && a.rank() >= 2 && b.rank() == 1 && b.dim(0) == a.dim(0);
    if (!same && !per_row)
        throw DimensionError("cannot broadcast " + shape_str(b.shape()) + " against " + shape_str(a.shape()));

    const std::size_t n = a.numel();
    const std::size_t slab = same ? 1 : detail::slab_size(a.shape());
    auto out = Tensor<T>::uninitialized(a.shape());
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    T* po = out.node()->data();
    parallel_for(n, [&](std::size_t i) {
        const T bv = pb[same ? i : i / slab];
        switch (kind) {
        case Binary::add: po[i] = pa[i] + bv; break;
        case Binary::sub: po[i] = pa[i] - bv; break;
        case Binary::mul: po[i] = pa[i] * bv; break;
        }
    });

    detail::record<T>(out, {&a, &b}, [kind, same, slab, n](const auto& in, detail::Node<T>& o) {
        auto g = o.grad_view();
        if (in[0]->requires_grad) {
            auto ga = in[0]->grad_span();
            const T* pb = in[1]->data();
            for (std::size_t i = 0; i < n; ++i)
                ga[i] += kind == Binary::mul ? g[i] * pb[same ? i : i / slab] : g[i];
        }
        if (in[1]->requires_grad) {
            auto gb = in[1]->grad_span();
            const T* pa = in[0]->data();
            for (std::size_t i = 0; i < n; ++i) {
                const T d = kind == Binary::add ? g[i] : kind == Binary::sub ? -g[i] : g[i] * pa[i];
                gb[same ? i : i / slab] += d;
            }
        }
    });
    return out;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b)
{
    return elementwise(a, b, Binary::add);
}
template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b)
{
    return elementwise(a, b, Binary::sub);
}
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b)
{
    return elementwise(a, b, Binary::mul);
}

/// mul * a + add, pointwise.
template <class T>
Tensor<T> scalar_affine(const Tensor<T>& a, T scale, T shift)
{
    auto out = Tensor<T>::uninitialized(a.shape());
    const T* pa = a.data().data();
    T* po = out.node()->data();
    parallel_for(a.numel(), [&](std::size_t i) { po[i] = scale * pa[i] + shift; });
    detail::record<T>(out, {&a}, [scale](const auto& in, detail::Node<T>& o) {
        auto g = o.grad_view();
        auto ga = in[0]->grad_span();
        for (std::size_t i = 0; i < g.size(); ++i)
            ga[i] += scale * g[i];
    });
    return out;
}

/// alpha * x + beta * y for equal shapes.
template <class T>
Tensor<T> axpby(const Tensor<T>& x, const Tensor<T>& y, T alpha, T beta)
{
    if (x.shape() != y.shape())
        throw DimensionError("axpby shape mismatch: " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
    auto out = Tensor<T>::uninitialized(x.shape());
    const T* px = x.data().data();
    const T* py = y.data().data();
    T* po = out.node()->data();
    parallel_for(x.numel(), [&](std::size_t i) { po[i] = alpha * px[i] + beta * py[i]; });
    detail::record<T>(out, {&x, &y}, [alpha, beta](const auto& in, detail::Node<T>& o) {
        auto g = o.grad_view();
        if (in[0]->requires_grad) {
            auto gx = in[0]->grad_span();
            for (std::size_t i = 0; i < g.size(); ++i)
                gx[i] += alpha * g[i];
        }
        if (in[1]->requires_grad) {
            auto gy = in[1]->grad_span();
            for (std::size_t i = 0; i < g.size(); ++i)
                gy[i] += beta * g[i];
        }
    });
    return out;
}

/// a[..., C] + bias[C].
template <class T>
Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias)
{
    if (a.rank() < 1 || bias.rank() != 1 || bias.dim(0) != a.shape().back())
        throw DimensionError("bias " + shape_str(bias.shape()) + " does not match last axis of " + shape_str(a.shape()));
    const std::size_t c = bias.dim(0);
    auto out = Tensor<T>::uninitialized(a.shape());
    const T* pa = a.data().data();
    const T* pb = bias.data().data();
    T* po = out.node()->data();
    parallel_for(a.numel(), [&](std::size_t i) { po[i] = pa[i] + pb[i % c]; });
    detail::record<T>(out, {&a, &bias}, [c](const auto& in, detail::Node<T>& o) {
        auto g = o.grad_view();
        if (in[0]->requires_grad) {
            auto ga = in[0]->grad_span();
            for (std::size_t i = 0; i < g.size(); ++i)
                ga[i] += g[i];
        }
        if (in[1]->requires_grad) {
            auto gb = in[1]->grad_span();
            for (std::size_t i = 0; i < g.size(); ++i)
                gb[i % c] += g[i];
        }
    });
    return out;
}

template <class T>
Tensor<T> sum(const Tensor<T>& a)
{
    double acc = 0.0;
    for (T v : a.data())
        acc += static_cast<double>(v);
    auto out = Tensor<T>::scalar(static_cast<T>(acc));
    detail::record<T>(out, {&a}, [](const auto& in, detail::Node<T>& o) {
        const T g = o.grad_view()[0];
        for (auto& v : in[0]->grad_span())
            v += g;
    });
    return out;
}

template <class T>
Tensor<T> mean(const Tensor<T>& a)
{
    double acc = 0.0;
    for (T v : a.data())
        acc += static_cast<double>(v);
    const std::size_t n = a.numel();
    auto out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
    detail::record<T>(out, {&a}, [n](const auto& in, detail::Node<T>& o) {
        const T g = o.grad_view()[0] / static_cast<T>(n);
        for (auto& v : in[0]->grad_span())
            v += g;
    });
    return out;
}

/// Same storage under a new shape.
template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape)
{
    if (shape_numel(shape) != a.numel())
        throw DimensionError("cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
    return detail::make_view(a, std::move(shape), 0);
}

/// Zero-copy view of a[t] (the slab at leading index t).
template <class T>
Tensor<T> row(const Tensor<T>& a, std::size_t t)
{
    if (a.rank() < 1 || t >= a.dim(0))
        throw DimensionError("row " + std::to_string(t) + " out of range for " + shape_str(a.shape()));
    Shape inner(a.shape().begin() + 1, a.shape().end());
    const std::size_t slab = shape_numel(inner);
    return detail::make_view(a, std::move(inner), t * slab);
}

/// Concatenate equally shaped tensors along a new leading axis.
template <class T>
Tensor<T> stack(const std::vector<Tensor<T>>& parts)
{
    if (parts.empty())
        throw ContractError("stack of zero tensors");
    const Shape& inner = parts.front().shape();
    for (const auto& p : parts)
        if (p.shape() != inner)
            throw DimensionError("stack shape mismatch: " + shape_str(p.shape()) + " vs " + shape_str(inner));
    Shape shape{parts.size()};
    shape.insert(shape.end(), inner.begin(), inner.end());
    auto out = Tensor<T>::uninitialized(shape);
    const std::size_t slab = shape_numel(inner);
    T* po = out.node()->data();
    for (std::size_t t = 0; t < parts.size(); ++t)
        std::copy_n(parts[t].data().data(), slab, po + t * slab);
    detail::record<T>(out, parts, [slab](const auto& in, detail::Node<T>& o) {
        auto g = o.grad_view();
        for (std::size_t t = 0; t < in.size(); ++t) {
            if (!in[t]->requires_grad)
                continue;
            auto gi = in[t]->grad_span();
            for (std::size_t i = 0; i < slab; ++i)
                gi[i] += g[t * slab + i];
        }
    });
    return out;
}

/// Average over the leading (time) axis: [T, ...] -> [...].
template <class T>
Tensor<T> mean_over_time(const Tensor<T>& a)
{
    if (a.rank() < 2)
        throw DimensionError("mean_over_time needs rank >= 2, got " + shape_str(a.shape()));
    const std::size_t steps = a.dim(0);
    Shape inner(a.shape().begin() + 1, a.shape().end());
    const std::size_t slab = shape_numel(inner);
    auto out = Tensor<T>::zeros(inner);
    T* po = out.node()->data();
    const T* pa = a.data().data();
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t i = 0; i < slab; ++i)
            po[i] += pa[t * slab + i];
    const T inv = T(1) / static_cast<T>(steps);
    for (std::size_t i = 0; i < slab; ++i)
        po[i] *= inv;
    detail::record<T>(out, {&a}, [steps, slab, inv](const auto& in, detail::Node<T>& o) {
        auto g = o.grad_view();
        auto ga = in[0]->grad_span();
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t i = 0; i < slab; ++i)
                ga[t * slab + i] += inv * g[i];
    });
    return out;
}

/// x[M×K] * weight[K×N] + bias[N].
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias)
{
    return add_bias(matmul(x, weight), bias);
}

} // namespace psn
