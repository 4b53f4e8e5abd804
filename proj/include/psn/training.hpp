#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "psn/data.hpp"
#include "psn/loss.hpp"
#include "psn/optim.hpp"

namespace psn {

struct TrainConfig {
    int epochs = 50;
    std::size_t batch_size = 64;
    double learning_rate = 0.1;
    OptimizerKind optimizer = OptimizerKind::sgd_momentum;
    double momentum = 0.9;
    double weight_decay = 0.0;
    LrSchedule schedule = LrSchedule::cosine;
    LossKind loss = LossKind::ce_mean_output;
    double label_smoothing = 0.0;
    bool lambda_schedule_enabled = true;
    double surrogate_alpha = 4.0;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (epochs < 1)
            throw ContractError("epochs must be >= 1");
        if (!(learning_rate >= 0.0))
            throw ContractError("learning rate must be non-negative");
        if (batch_size == 0)
            throw ContractError("batch size must be >= 1");
        if (!(surrogate_alpha > 0.0))
            throw ContractError("surrogate alpha must be positive");
    }
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    std::optional<double> test_accuracy;
    std::vector<double> firing_rates;  // per neuron layer, training batches
    std::optional<double> lambda;
    double lr = 0.0;
};

using History = std::vector<EpochRecord>;

struct EvalResult {
    double accuracy = 0.0;
    std::vector<double> firing_rates;
};

namespace detail {

/// argmax over classes of time-averaged logits[T, N, C].
inline std::vector<int> predict(const Tensor<float>& logits)
{
    const std::size_t steps = logits.dim(0), n = logits.dim(1), c = logits.dim(2);
    const auto d = logits.data();
    std::vector<int> out(n);
    std::vector<double> acc(c);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t j = 0; j < c; ++j)
                acc[j] += d[(t * n + i) * c + j];
        out[i] = static_cast<int>(std::max_element(acc.begin(), acc.end()) - acc.begin());
    }
    return out;
}

inline std::size_t count_correct(const std::vector<int>& pred, const std::vector<int>& labels)
{
    std::size_t k = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        k += pred[i] == labels[i];
    return k;
}

template <class Span>
bool all_finite(const Span& s)
{
    for (auto v : s)
        if (!std::isfinite(v))
            return false;
    return true;
}

} // namespace detail

/// Top-1 accuracy and per-layer firing rate, without recording.
inline EvalResult evaluate(const Model& model, const data::SequenceBatch& batch, std::size_t batch_size = 256,
                           const SurrogateConfig& cfg = {})
{
    const std::size_t n = batch.size();
    EvalResult r;
    r.firing_rates.assign(model.neuron_layer_count(), 0.0);
    std::size_t correct = 0;
    for (std::size_t lo = 0; lo < n; lo += batch_size) {
        const std::size_t hi = std::min(n, lo + batch_size);
        std::vector<std::size_t> idx(hi - lo);
        std::iota(idx.begin(), idx.end(), lo);
        auto mb = data::gather(batch, idx);
        auto out = model.forward(mb.inputs, cfg);
        correct += detail::count_correct(detail::predict(out.logits), mb.labels);
        for (std::size_t k = 0; k < r.firing_rates.size(); ++k)
            r.firing_rates[k] += out.firing_rates[k] * static_cast<double>(hi - lo);
    }
    for (auto& f : r.firing_rates)
        f /= static_cast<double>(n);
    r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    return r;
}

using EpochCallback = std::function<void(const EpochRecord&)>;

/// BPTT training. Deterministic for a fixed (model seed, cfg, data).
/// Throws DivergenceError naming the first non-finite tensor encountered.
inline History train(Model& model, const data::SequenceBatch& train_set, const data::SequenceBatch* test_set,
                     const TrainConfig& cfg, const EpochCallback& on_epoch = {})
{
    cfg.validate();
    const std::size_t n = train_set.size();
    if (n == 0)
        throw ContractError("training set is empty");
    for (int y : train_set.labels)
        if (y < 0 || static_cast<std::size_t>(y) >= model.spec().num_classes())
            throw ContractError("training label " + std::to_string(y) + " outside model classes");

    auto params = model.parameters();
    OptimizerConfig ocfg;
    ocfg.kind = cfg.optimizer;
    ocfg.lr = cfg.learning_rate;
    ocfg.momentum = cfg.momentum;
    ocfg.weight_decay = cfg.weight_decay;
    Optimizer opt(params, ocfg);
    SurrogateConfig scfg;
    scfg.alpha = cfg.surrogate_alpha;

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    History history;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        if (model.has_masked_psn()) {
            if (cfg.lambda_schedule_enabled)
                model.set_lambda(cfg.epochs >= 2 ? lambda_schedule(epoch, cfg.epochs) : 1.0);
            rec.lambda = model.lambda();
        }
        rec.lr = scheduled_lr(cfg.schedule, cfg.learning_rate, epoch, cfg.epochs);
        opt.set_lr(rec.lr);
        std::shuffle(order.begin(), order.end(), rng);
        rec.firing_rates.assign(model.neuron_layer_count(), 0.0);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t lo = 0; lo < n; lo += cfg.batch_size) {
            const std::size_t hi = std::min(n, lo + cfg.batch_size);
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                         order.begin() + static_cast<std::ptrdiff_t>(hi));
            auto mb = data::gather(train_set, idx);
            opt.zero_grad();
            double loss_value = 0.0;
            {
                Tape<float> tape;
                auto guard = tape.record();
                auto out = model.forward(mb.inputs, scfg);
                const std::string where = "at epoch " + std::to_string(epoch) + ", batch " + std::to_string(lo / cfg.batch_size);
                if (!detail::all_finite(out.logits.data()))
                    throw DivergenceError("logits", where);
                auto loss = compute_loss(cfg.loss, out.logits, mb.labels, cfg.label_smoothing);
                loss_value = loss.item();
                if (!std::isfinite(loss_value))
                    throw DivergenceError("loss", where);
                tape.backward(loss);
                for (const auto& p : params)
                    if (p.tensor.has_grad() && !detail::all_finite(p.tensor.grad()))
                        throw DivergenceError(p.name + ".grad", where);
                correct += detail::count_correct(detail::predict(out.logits), mb.labels);
                for (std::size_t k = 0; k < rec.firing_rates.size(); ++k)
                    rec.firing_rates[k] += out.firing_rates[k] * static_cast<double>(hi - lo);
            }
            opt.step();
            for (const auto& p : params)
                if (!detail::all_finite(p.tensor.data()))
                    throw DivergenceError(p.name, "after update at epoch " + std::to_string(epoch));
            loss_sum += loss_value * static_cast<double>(hi - lo);
        }
        rec.train_loss = loss_sum / static_cast<double>(n);
        rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
        for (auto& f : rec.firing_rates)
            f /= static_cast<double>(n);
        if (test_set)
            rec.test_accuracy = evaluate(model, *test_set, 256, scfg).accuracy;
        history.push_back(rec);
        if (on_epoch)
            on_epoch(rec);
    }
    return history;
}

/// Line-delimited history: "epoch\tsplit\tmetric\tvalue" with a header line.
inline std::string format_history(const History& h)
{
    std::ostringstream out;
    out.precision(9);
    out << "epoch\tsplit\tmetric\tvalue\n";
    for (const auto& r : h) {
        out << r.epoch << "\ttrain\tloss\t" << r.train_loss << "\n";
        out << r.epoch << "\ttrain\taccuracy\t" << r.train_accuracy << "\n";
        if (r.test_accuracy)
            out << r.epoch << "\ttest\taccuracy\t" << *r.test_accuracy << "\n";
        for (std::size_t k = 0; k < r.firing_rates.size(); ++k)
            out << r.epoch << "\ttrain\tfiring_rate_" << k << "\t" << r.firing_rates[k] << "\n";
        if (r.lambda)
            out << r.epoch << "\ttrain\tlambda\t" << *r.lambda << "\n";
        out << r.epoch << "\ttrain\tlr\t" << r.lr << "\n";
    }
    return out.str();
}

} // namespace psn
