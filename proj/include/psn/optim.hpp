#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "psn/model.hpp"

namespace psn {

enum class OptimizerKind { sgd_momentum, adam_like };
enum class LrSchedule { cosine, step, constant };

inline OptimizerKind parse_optimizer(std::string_view s)
{
    if (s == "sgd")
        return OptimizerKind::sgd_momentum;
    if (s == "adamw" || s == "adam")
        return OptimizerKind::adam_like;
    throw ContractError("unknown optimizer '" + std::string(s) + "'");
}

inline std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::sgd_momentum ? "sgd" : "adamw"; }

inline LrSchedule parse_schedule(std::string_view s)
{
    if (s == "cosine")
        return LrSchedule::cosine;
    if (s == "step")
        return LrSchedule::step;
    if (s == "constant")
        return LrSchedule::constant;
    throw ContractError("unknown lr schedule '" + std::string(s) + "'");
}

inline std::string_view to_string(LrSchedule s)
{
    switch (s) {
    case LrSchedule::cosine: return "cosine";
    case LrSchedule::step: return "step";
    default: return "constant";
    }
}

/// Learning rate for a 0-based epoch. Step decay divides by 10 every third of the run.
inline double scheduled_lr(LrSchedule s, double base, int epoch, int epochs)
{
    switch (s) {
    case LrSchedule::cosine:
        return 0.5 * base * (1.0 + std::cos(std::numbers::pi * epoch / std::max(1, epochs)));
    case LrSchedule::step: return base * std::pow(0.1, epoch / std::max(1, (epochs + 2) / 3));
    default: return base;
    }
}

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::sgd_momentum;
    double lr = 0.1;
    double momentum = 0.9;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double weight_decay = 0.0;
};

/// SGD with momentum or AdamW-style first/second moments with bias
/// correction and decoupled weight decay.
class Optimizer {
public:
    Optimizer(std::vector<NamedParam> params, OptimizerConfig cfg) : params_(std::move(params)), cfg_(cfg)
    {
        for (const auto& p : params_) {
            m_.emplace_back(p.tensor.numel(), 0.0f);
            if (cfg_.kind == OptimizerKind::adam_like)
                v_.emplace_back(p.tensor.numel(), 0.0f);
        }
    }

    void set_lr(double lr) { cfg_.lr = lr; }
    double lr() const { return cfg_.lr; }

    void zero_grad()
    {
        for (auto& p : params_)
            p.tensor.zero_grad();
    }

    /// Applies one update. Parameters must not be referenced by a live tape.
    void step()
    {
        ++t_;
        const float lr = static_cast<float>(cfg_.lr);
        if (lr == 0.0f)
            return;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_), bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& p = params_[k].tensor;
            if (!p.has_grad())
                continue;
            const auto g = p.grad();
            auto w = p.mutable_data();
            auto& m = m_[k];
            if (cfg_.kind == OptimizerKind::sgd_momentum) {
                const float mu = static_cast<float>(cfg_.momentum), wd = static_cast<float>(cfg_.weight_decay);
                for (std::size_t i = 0; i < w.size(); ++i) {
                    m[i] = mu * m[i] + g[i] + wd * w[i];
                    w[i] -= lr * m[i];
                }
            } else {
                auto& v = v_[k];
                const float b1 = static_cast<float>(cfg_.beta1), b2 = static_cast<float>(cfg_.beta2);
                const float decay = static_cast<float>(1.0 - cfg_.lr * cfg_.weight_decay);
                for (std::size_t i = 0; i < w.size(); ++i) {
                    m[i] = b1 * m[i] + (1.0f - b1) * g[i];
                    v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
                    const double mh = m[i] / bc1, vh = v[i] / bc2;
                    w[i] = w[i] * decay - static_cast<float>(cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps));
                }
            }
        }
    }

private:
    std::vector<NamedParam> params_;
    OptimizerConfig cfg_;
    std::vector<std::vector<float>> m_, v_;
    int t_ = 0;
};

} // namespace psn
