#pragma once

// Wall-time grid over (kind, N, T) against a serial LIF baseline, and the
// tracked-allocation memory comparison of IF vs PSN layers.

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <map>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "psn/memory.hpp"
#include "psn/model.hpp"
#include "psn/parallel_for.hpp"

namespace psn::bench {

enum class Mode { inference, training };

inline std::string_view to_string(Mode m) { return m == Mode::inference ? "inference" : "training"; }

inline Mode parse_mode(std::string_view s)
{
    if (s == "inference")
        return Mode::inference;
    if (s == "training")
        return Mode::training;
    throw ContractError("unknown bench mode '" + std::string(s) + "'");
}

struct BenchConfig {
    std::vector<NeuronKind> kinds{NeuronKind::lif, NeuronKind::psn};
    std::vector<std::size_t> n_values{1u << 8, 1u << 12, 1u << 16, 1u << 20};
    std::vector<std::size_t> t_values{2, 4, 8, 16, 32, 64};
    Mode mode = Mode::inference;
    int warmup_iters = 1;
    int measured_iters = 3;
    std::uint64_t seed = 0;
    std::size_t order = 4;          // masked / sliding PSN
    bool skip_large = false;        // skip N >= 2^20
    std::size_t max_cell_bytes = std::size_t{3} << 30;  // estimated working-set cap per cell

    void validate() const
    {
        if (measured_iters < 3)
            throw ContractError("measured_iters must be >= 3 (timing uses the median)");
        if (warmup_iters < 0)
            throw ContractError("warmup_iters must be >= 0");
        if (kinds.empty() || n_values.empty() || t_values.empty())
            throw ContractError("bench grid must not be empty");
    }
};

struct BenchRecord {
    NeuronKind kind = NeuronKind::lif;
    std::size_t n = 0, t = 0;
    Mode mode = Mode::inference;
    double wall_time_seconds = 0.0;  // median
    double ratio_vs_baseline = 0.0;  // t_LIF / t_kind
    std::uint64_t allocations = 0;   // per measured iteration
    std::string status = "ok";       // ok | skipped | oom
    int threads = 1;
};

/// Byte-identical inputs for every kind at a given (N, T, seed).
inline Tensor<float> bench_input(std::size_t steps, std::size_t n, std::uint64_t seed)
{
    Rng rng(seed ^ (steps * 0x9E3779B97F4A7C15ull) ^ (n << 20));
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    Tensor<float> x({steps, n});
    for (auto& v : x.mutable_data())
        v = dist(rng);
    return x;
}

namespace detail {

struct Layer {
    NeuronKind kind;
    VanillaNeuronParams vanilla;
    PSNParams<float> psn;
    MaskedPSNParams<float> masked;
    SlidingPSNParams<float> sliding;
};

inline Layer make_layer(NeuronKind kind, std::size_t steps, std::size_t order, std::uint64_t seed)
{
    Rng rng(seed);
    Layer l{kind, default_vanilla(kind), {}, {}, {}};
    if (kind == NeuronKind::psn)
        l.psn = PSNParams<float>::init(steps, rng);
    else if (kind == NeuronKind::masked_psn)
        l.masked = MaskedPSNParams<float>::init(steps, std::min(order, steps), rng);
    else if (kind == NeuronKind::sliding_psn)
        l.sliding = SlidingPSNParams<float>::init(order);
    return l;
}

inline Tensor<float> run_layer(const Layer& l, const Tensor<float>& x)
{
    switch (l.kind) {
    case NeuronKind::psn: return psn_forward(x, l.psn).s;
    case NeuronKind::masked_psn: return masked_psn_forward(x, l.masked).s;
    case NeuronKind::sliding_psn: return spsn_forward(x, l.sliding).s;
    default:
        return l.vanilla.reset == ResetMode::none ? parallel_no_reset(x, l.vanilla).s
                                                  : vanilla_sequence(x, l.vanilla, {}, false).s;
    }
}

/// Rough peak working set of one measured iteration.
inline std::size_t estimate_bytes(NeuronKind kind, std::size_t steps, std::size_t n, Mode mode)
{
    const std::size_t cell = steps * n * sizeof(float);
    const std::size_t per = is_parallel_family(kind) ? 4 : 6;
    return cell * per * (mode == Mode::training ? 2 : 1);
}

inline double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

} // namespace detail

/// Median wall time of one forward (inference, no tape) or forward+backward
/// of sum(S) (training) for one cell.
inline BenchRecord time_cell(NeuronKind kind, std::size_t n, std::size_t steps, const BenchConfig& cfg)
{
    BenchRecord r{kind, n, steps, cfg.mode, 0.0, 0.0, 0, "ok", num_threads()};
    if (cfg.skip_large && n >= (std::size_t{1} << 20)) {
        r.status = "skipped";
        return r;
    }
    if (detail::estimate_bytes(kind, steps, n, cfg.mode) > cfg.max_cell_bytes) {
        r.status = "skipped";
        return r;
    }
    try {
        const auto layer = detail::make_layer(kind, steps, cfg.order, cfg.seed);
        auto x = bench_input(steps, n, cfg.seed);
        if (cfg.mode == Mode::training)
            x.set_requires_grad();
        std::vector<double> times;
        std::uint64_t allocs = 0;
        for (int it = 0; it < cfg.warmup_iters + cfg.measured_iters; ++it) {
            const auto a0 = memory::allocation_count();
            const auto t0 = std::chrono::steady_clock::now();
            if (cfg.mode == Mode::inference) {
                auto s = detail::run_layer(layer, x);
            } else {
                Tape<float> tape;
                auto guard = tape.record();
                tape.backward(sum(detail::run_layer(layer, x)));
            }
            const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            if (it >= cfg.warmup_iters) {
                times.push_back(dt);
                allocs = memory::allocation_count() - a0;
            }
        }
        r.wall_time_seconds = std::max(detail::median(times), 1e-9);
        r.allocations = allocs;
    } catch (const std::bad_alloc&) {
        r.status = "oom";
    }
    return r;
}

/// One record per (kind, N, T); ratios are against a serial LIF (hard reset)
/// measured on the same inputs.
inline std::vector<BenchRecord> run_grid(const BenchConfig& cfg)
{
    cfg.validate();
    std::vector<BenchRecord> out;
    for (auto n : cfg.n_values)
        for (auto t : cfg.t_values) {
            std::map<NeuronKind, BenchRecord> cell;
            for (auto k : cfg.kinds)
                cell[k] = time_cell(k, n, t, cfg);
            if (!cell.contains(NeuronKind::lif))
                cell[NeuronKind::lif] = time_cell(NeuronKind::lif, n, t, cfg);
            const auto& base = cell[NeuronKind::lif];
            for (auto k : cfg.kinds) {
                auto r = cell[k];
                if (r.status == "ok" && base.status == "ok")
                    r.ratio_vs_baseline = k == NeuronKind::lif ? 1.0 : base.wall_time_seconds / r.wall_time_seconds;
                out.push_back(r);
            }
        }
    return out;
}

inline std::vector<BenchRecord> bench_forward(BenchConfig cfg)
{
    cfg.mode = Mode::inference;
    return run_grid(cfg);
}

inline std::vector<BenchRecord> bench_training(BenchConfig cfg)
{
    cfg.mode = Mode::training;
    return run_grid(cfg);
}

inline constexpr std::string_view kCsvHeader = "neuron_kind,N,T,mode,wall_time_seconds,ratio_vs_baseline,status,threads";

inline std::string to_csv(const std::vector<BenchRecord>& rows)
{
    std::ostringstream out;
    out << kCsvHeader << "\n";
    out << std::setprecision(9);
    for (const auto& r : rows)
        out << to_string(r.kind) << ',' << r.n << ',' << r.t << ',' << to_string(r.mode) << ','
            << r.wall_time_seconds << ',' << r.ratio_vs_baseline << ',' << r.status << ',' << r.threads << "\n";
    return out.str();
}

/// Human-readable ratio grid, one block per kind: rows N, columns T.
inline std::string grid_table(const std::vector<BenchRecord>& rows)
{
    std::ostringstream out;
    std::vector<NeuronKind> kinds;
    std::vector<std::size_t> ns, ts;
    for (const auto& r : rows) {
        if (std::find(kinds.begin(), kinds.end(), r.kind) == kinds.end())
            kinds.push_back(r.kind);
        if (std::find(ns.begin(), ns.end(), r.n) == ns.end())
            ns.push_back(r.n);
        if (std::find(ts.begin(), ts.end(), r.t) == ts.end())
            ts.push_back(r.t);
    }
    for (auto k : kinds) {
        out << to_string(k) << " (" << (rows.empty() ? "" : to_string(rows.front().mode))
            << "): t_lif / t_" << to_string(k) << "\n";
        out << std::setw(10) << "N \\ T";
        for (auto t : ts)
            out << std::setw(9) << t;
        out << "\n";
        for (auto n : ns) {
            out << std::setw(10) << n;
            for (auto t : ts) {
                auto it = std::find_if(rows.begin(), rows.end(),
                                       [&](const BenchRecord& r) { return r.kind == k && r.n == n && r.t == t; });
                if (it == rows.end())
                    out << std::setw(9) << "";
                else if (it->status != "ok")
                    out << std::setw(9) << it->status;
                else
                    out << std::setw(9) << std::fixed << std::setprecision(2) << it->ratio_vs_baseline;
            }
            out << "\n";
        }
        out << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// memory

enum class MemoryConfig { no_neuron, if_neuron, psn };

inline std::string_view to_string(MemoryConfig c)
{
    switch (c) {
    case MemoryConfig::no_neuron: return "no_neuron";
    case MemoryConfig::if_neuron: return "if";
    default: return "psn";
    }
}

struct MemoryRecord {
    MemoryConfig config;
    std::size_t t = 0, n = 0;
    std::int64_t peak_tracked_bytes = 0;
};

struct MemoryReport {
    MemoryRecord no_neuron, if_neuron, psn;

    double delta_if() const { return static_cast<double>(if_neuron.peak_tracked_bytes - no_neuron.peak_tracked_bytes); }
    double delta_psn() const { return static_cast<double>(psn.peak_tracked_bytes - no_neuron.peak_tracked_bytes); }
    double ratio() const { return delta_if() / delta_psn(); }
    /// (delta_IF - delta_PSN) / (T * N) in bytes.
    double per_cell_difference() const { return (delta_if() - delta_psn()) / static_cast<double>(if_neuron.t * if_neuron.n); }
};

/// Widths of the shared synapse stack used by the memory experiment.
inline std::vector<std::size_t> memory_stack_widths() { return {64, 128, 128, 256}; }

/// Peak tracked bytes above the pre-step baseline for one forward+backward
/// step of the synapse stack with the chosen neuron after every hidden layer.
inline MemoryRecord measure_memory(MemoryConfig config, std::size_t steps, std::size_t n, std::uint64_t seed = 0)
{
    std::optional<NeuronKind> kind;
    if (config == MemoryConfig::if_neuron)
        kind = NeuronKind::if_neuron;
    else if (config == MemoryConfig::psn)
        kind = NeuronKind::psn;
    constexpr std::size_t in = 32, classes = 10;
    Model model(ModelSpec::mlp(in, memory_stack_widths(), classes, kind, steps, 0, seed));
    Tensor<float> x({steps, n, in});
    Rng rng(seed);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    for (auto& v : x.mutable_data())
        v = dist(rng);
    memory::reset_peak();
    const auto base = memory::live_bytes();
    {
        Tape<float> tape;
        auto guard = tape.record();
        auto out = model.forward(x);
        tape.backward(sum(out.logits));
    }
    return {config, steps, n, memory::peak_bytes() - base};
}

inline MemoryReport bench_memory(std::size_t steps, std::size_t n, std::uint64_t seed = 0)
{
    return {measure_memory(MemoryConfig::no_neuron, steps, n, seed), measure_memory(MemoryConfig::if_neuron, steps, n, seed),
            measure_memory(MemoryConfig::psn, steps, n, seed)};
}

} // namespace psn::bench
