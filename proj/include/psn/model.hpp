#pragma once

// Small sequence classifiers: linear synapses alternating with neuron layers,
// operating on [T, B, C] tensors with time outermost.

#include <cmath>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "psn/checkpoint.hpp"
#include "psn/psn_family.hpp"

namespace psn {

struct LayerSpec {
    enum class Type { linear, neuron };
    Type type = Type::linear;
    std::size_t in = 0, out = 0;   // linear only
    NeuronKind kind = NeuronKind::lif;
    std::size_t order = 0;         // masked / sliding PSN
    VanillaNeuronParams vanilla;   // vanilla kinds

    static LayerSpec linear(std::size_t in, std::size_t out)
    {
        LayerSpec s;
        s.in = in;
        s.out = out;
        return s;
    }

    static LayerSpec neuron(NeuronKind kind, std::size_t order = 0);
};

inline LayerSpec LayerSpec::neuron(NeuronKind kind, std::size_t order)
{
    LayerSpec s;
    s.type = Type::neuron;
    s.kind = kind;
    s.order = order;
    s.vanilla = default_vanilla(kind);
    return s;
}

enum class Head { time_average, per_step };

struct ModelSpec {
    std::vector<LayerSpec> layers;
    Head head = Head::time_average;
    std::size_t steps = 16;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (layers.empty() || layers.back().type != LayerSpec::Type::linear)
            throw ContractError("model must end with a linear classifier layer");
        std::size_t width = 0;
        bool after_linear = false;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto& l = layers[i];
            if (l.type == LayerSpec::Type::linear) {
                if (l.in == 0 || l.out == 0)
                    throw ContractError("layer " + std::to_string(i) + ": linear dims must be positive");
                if (width != 0 && l.in != width)
                    throw DimensionError("layer " + std::to_string(i) + ": expects " + std::to_string(l.in)
                                         + " inputs but previous layer gives " + std::to_string(width));
                width = l.out;
                after_linear = true;
                continue;
            }
            if (!after_linear)
                throw ContractError("layer " + std::to_string(i) + ": neuron layer must follow a linear layer");
            after_linear = false;
            if (l.kind == NeuronKind::masked_psn && (l.order < 1 || l.order > steps))
                throw ContractError("layer " + std::to_string(i) + ": masked PSN order must lie in [1, T]");
            if (l.kind == NeuronKind::sliding_psn && l.order < 1)
                throw ContractError("layer " + std::to_string(i) + ": sliding PSN order must be >= 1");
            if (!is_parallel_family(l.kind))
                l.vanilla.validate();
        }
    }

    std::size_t input_dim() const { return layers.front().in; }
    std::size_t num_classes() const { return layers.back().out; }

    /// in -> hidden[0] -> ... -> classes with one neuron layer after every hidden linear layer.
    static ModelSpec mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t classes,
                         std::optional<NeuronKind> kind, std::size_t steps, std::size_t order = 0,
                         std::uint64_t seed = 0)
    {
        ModelSpec m;
        m.steps = steps;
        m.seed = seed;
        std::size_t width = in;
        for (auto h : hidden) {
            m.layers.push_back(LayerSpec::linear(width, h));
            if (kind)
                m.layers.push_back(LayerSpec::neuron(*kind, order));
            width = h;
        }
        m.layers.push_back(LayerSpec::linear(width, classes));
        return m;
    }
};

/// He-uniform synapse weights, U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero bias.
/// The wider bound keeps the first neuron layers firing without normalization.
inline void synapse_init(Tensor<float>& w, std::size_t fan_in, Rng& rng)
{
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : w.mutable_data())
        v = static_cast<float>(dist(rng));
}

struct NamedParam {
    std::string name;
    Tensor<float> tensor;
};

struct ForwardResult {
    Tensor<float> logits;                 // [T, B, classes]
    std::vector<double> firing_rates;     // one per neuron layer
};

class Model {
public:
    explicit Model(ModelSpec spec) : spec_(std::move(spec))
    {
        spec_.validate();
        Rng rng(spec_.seed);
        for (const auto& l : spec_.layers) {
            Layer layer{l, {}};
            if (l.type == LayerSpec::Type::linear) {
                LinearParams p{Tensor<float>({l.in, l.out}), Tensor<float>({l.out})};
                synapse_init(p.weight, l.in, rng);
                p.weight.set_requires_grad();
                p.bias.set_requires_grad();
                layer.params = p;
            } else if (l.kind == NeuronKind::psn) {
                layer.params = PSNParams<float>::init(spec_.steps, rng);
            } else if (l.kind == NeuronKind::masked_psn) {
                auto mp = MaskedPSNParams<float>::init(spec_.steps, l.order, rng);
                mp.lambda = 1.0;
                layer.params = mp;
            } else if (l.kind == NeuronKind::sliding_psn) {
                layer.params = SlidingPSNParams<float>::init(l.order);
            } else {
                layer.params = l.vanilla;
            }
            layers_.push_back(std::move(layer));
        }
    }

    const ModelSpec& spec() const { return spec_; }

    /// x is [T, B, input_dim].
    ForwardResult forward(const Tensor<float>& x, const SurrogateConfig& cfg = {}) const
    {
        if (x.rank() != 3 || x.dim(2) != spec_.input_dim())
            throw DimensionError("model input must be [T, B, " + std::to_string(spec_.input_dim()) + "], got "
                                 + shape_str(x.shape()));
        const std::size_t steps = x.dim(0), batch = x.dim(1);
        ForwardResult res;
        Tensor<float> h = x;
        for (const auto& layer : layers_) {
            const std::size_t width = h.dim(2);
            if (auto* lp = std::get_if<LinearParams>(&layer.params)) {
                auto flat = reshape(h, {steps * batch, width});
                h = reshape(linear(flat, lp->weight, lp->bias), {steps, batch, lp->weight.dim(1)});
                continue;
            }
            auto flat = reshape(h, {steps, batch * width});
            SpikeTrace<float> tr = std::visit(
                [&](const auto& p) -> SpikeTrace<float> {
                    using P = std::decay_t<decltype(p)>;
                    if constexpr (std::is_same_v<P, LinearParams>)
                        return {};
                    else if constexpr (std::is_same_v<P, VanillaNeuronParams>)
                        return p.reset == ResetMode::none ? parallel_no_reset(flat, p, cfg)
                                                          : vanilla_sequence(flat, p, cfg, false);
                    else if constexpr (std::is_same_v<P, PSNParams<float>>)
                        return psn_forward(flat, p, cfg);
                    else if constexpr (std::is_same_v<P, MaskedPSNParams<float>>)
                        return masked_psn_forward(flat, p, cfg);
                    else
                        return spsn_forward(flat, p, cfg);
                },
                layer.params);
            res.firing_rates.push_back(tr.firing_rate());
            h = reshape(tr.s, {steps, batch, width});
        }
        res.logits = h;
        return res;
    }

    std::vector<NamedParam> parameters() const
    {
        std::vector<NamedParam> out;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const auto prefix = "layer" + std::to_string(i) + ".";
            std::visit(
                [&](const auto& p) {
                    using P = std::decay_t<decltype(p)>;
                    if constexpr (std::is_same_v<P, LinearParams>) {
                        out.push_back({prefix + "weight", p.weight});
                        out.push_back({prefix + "bias", p.bias});
                    } else if constexpr (!std::is_same_v<P, VanillaNeuronParams>) {
                        out.push_back({prefix + "weight", p.weight});
                        out.push_back({prefix + "threshold", p.threshold});
                    }
                },
                layers_[i].params);
        }
        return out;
    }

    std::size_t parameter_count() const
    {
        std::size_t n = 0;
        for (const auto& p : parameters())
            n += p.tensor.numel();
        return n;
    }

    std::size_t neuron_layer_count() const
    {
        std::size_t n = 0;
        for (const auto& l : spec_.layers)
            n += l.type == LayerSpec::Type::neuron;
        return n;
    }

    bool has_masked_psn() const
    {
        for (const auto& l : layers_)
            if (std::holds_alternative<MaskedPSNParams<float>>(l.params))
                return true;
        return false;
    }

    void set_lambda(double lambda)
    {
        for (auto& l : layers_)
            if (auto* mp = std::get_if<MaskedPSNParams<float>>(&l.params)) {
                blend_mask(Tensor<float>({1}), lambda);  // range check
                mp->lambda = lambda;
            }
    }

    std::optional<double> lambda() const
    {
        for (const auto& l : layers_)
            if (auto* mp = std::get_if<MaskedPSNParams<float>>(&l.params))
                return mp->lambda;
        return std::nullopt;
    }

    std::vector<checkpoint::Entry> state_dict() const
    {
        std::vector<checkpoint::Entry> out;
        for (const auto& p : parameters())
            out.push_back(checkpoint::entry_of(p.name, p.tensor));
        return out;
    }

    /// Copies values into existing parameters; names and shapes must match.
    void load_state_dict(const std::vector<checkpoint::Entry>& entries)
    {
        auto params = parameters();
        if (entries.size() != params.size())
            throw ContractError("checkpoint holds " + std::to_string(entries.size()) + " arrays, model has "
                                + std::to_string(params.size()));
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (entries[i].name != params[i].name || entries[i].shape != params[i].tensor.shape())
                throw ContractError("checkpoint entry '" + entries[i].name + "' " + shape_str(entries[i].shape)
                                    + " does not match parameter '" + params[i].name + "' "
                                    + shape_str(params[i].tensor.shape()));
            auto dst = params[i].tensor.mutable_data();
            std::copy(entries[i].values.begin(), entries[i].values.end(), dst.begin());
        }
    }

private:
    struct LinearParams {
        Tensor<float> weight;  // [in, out]
        Tensor<float> bias;    // [out]
    };
    using Params = std::variant<LinearParams, VanillaNeuronParams, PSNParams<float>, MaskedPSNParams<float>,
                                SlidingPSNParams<float>>;
    struct Layer {
        LayerSpec spec;
        Params params;
    };

    ModelSpec spec_;
    std::vector<Layer> layers_;
};

} // namespace psn
