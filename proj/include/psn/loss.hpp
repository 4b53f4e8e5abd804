#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "psn/ops.hpp"

namespace psn {

enum class LossKind { ce_mean_output, tet };

/// Mean cross-entropy of logits[N, C] against integer labels, with targets
/// (1 - smoothing) * onehot + smoothing / C.
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels, double smoothing = 0.0)
{
    if (logits.rank() != 2)
        throw DimensionError("cross_entropy needs logits[N, C], got " + shape_str(logits.shape()));
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    if (c < 2)
        throw ContractError("cross_entropy needs at least 2 classes");
    if (labels.size() != n)
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n)
                             + " rows");
    if (!(smoothing >= 0.0 && smoothing < 1.0))
        throw ContractError("label smoothing must lie in [0, 1)");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= c)
            throw ContractError("label " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");

    const T* z = logits.data().data();
    auto probs = std::make_shared<std::vector<double>>(n * c);
    double total = 0.0;
    const double off = smoothing / static_cast<double>(c);
    for (std::size_t i = 0; i < n; ++i) {
        const T* zi = z + i * c;
        double mx = zi[0];
        for (std::size_t j = 1; j < c; ++j)
            mx = std::max(mx, static_cast<double>(zi[j]));
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j)
            denom += std::exp(static_cast<double>(zi[j]) - mx);
        const double log_denom = std::log(denom) + mx;
        for (std::size_t j = 0; j < c; ++j) {
            const double logp = static_cast<double>(zi[j]) - log_denom;
            (*probs)[i * c + j] = std::exp(logp);
            const double q = off + (static_cast<std::size_t>(labels[i]) == j ? 1.0 - smoothing : 0.0);
            total -= q * logp;
        }
    }
    auto out = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(n)));
    detail::record<T>(out, {&logits}, [probs, labels, n, c, smoothing, off](const auto& in, detail::Node<T>& o) {
        const double g = static_cast<double>(o.grad_view()[0]) / static_cast<double>(n);
        auto gz = in[0]->grad_span();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) {
                const double q = off + (static_cast<std::size_t>(labels[i]) == j ? 1.0 - smoothing : 0.0);
                gz[i * c + j] += static_cast<T>(g * ((*probs)[i * c + j] - q));
            }
    });
    return out;
}

/// Cross-entropy of time-averaged logits; outputs are [T, N, C].
template <class T>
Tensor<T> loss_ce_mean(const Tensor<T>& outputs, const std::vector<int>& labels, double smoothing = 0.0)
{
    if (outputs.rank() != 3)
        throw DimensionError("loss expects outputs[T, N, C], got " + shape_str(outputs.shape()));
    return cross_entropy(mean_over_time(outputs), labels, smoothing);
}

/// Per-step cross-entropy averaged over time.
template <class T>
Tensor<T> loss_tet(const Tensor<T>& outputs, const std::vector<int>& labels, double smoothing = 0.0)
{
    if (outputs.rank() != 3)
        throw DimensionError("loss expects outputs[T, N, C], got " + shape_str(outputs.shape()));
    const std::size_t steps = outputs.dim(0);
    std::vector<int> tiled;
    tiled.reserve(steps * labels.size());
    for (std::size_t t = 0; t < steps; ++t)
        tiled.insert(tiled.end(), labels.begin(), labels.end());
    return cross_entropy(reshape(outputs, {steps * outputs.dim(1), outputs.dim(2)}), tiled, smoothing);
}

template <class T>
Tensor<T> compute_loss(LossKind kind, const Tensor<T>& outputs, const std::vector<int>& labels, double smoothing)
{
    return kind == LossKind::tet ? loss_tet(outputs, labels, smoothing) : loss_ce_mean(outputs, labels, smoothing);
}

} // namespace psn
