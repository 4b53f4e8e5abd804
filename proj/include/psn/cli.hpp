#pragma once

// Command-line front end: bench, memory, train, eval, verify.
// Exit codes: 0 success, 1 verification failure, 2 usage error, 3 divergence.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "psn/bench.hpp"
#include "psn/training.hpp"
#include "psn/verify.hpp"

#ifndef PSN_VERSION
#define PSN_VERSION "0.0.0"
#endif

namespace psn::cli {

enum Exit : int { ok = 0, verification_failed = 1, usage = 2, diverged = 3 };

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline std::string utc_now()
{
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream o;
    o << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return o.str();
}

/// Written before any work starts and rewritten with the end time afterwards.
struct Manifest {
    fs::path path;
    json doc;

    Manifest(fs::path p, std::string command, json config, std::uint64_t seed, int threads, json outputs)
        : path(std::move(p))
    {
        doc["command"] = std::move(command);
        doc["config"] = std::move(config);
        doc["seed"] = seed;
        doc["version"] = PSN_VERSION;
        doc["threads"] = threads;
        doc["start_time"] = utc_now();
        doc["end_time"] = nullptr;
        doc["outputs"] = std::move(outputs);
        write();
    }

    void write() const { io::write_atomic(path, doc.dump(2) + "\n"); }

    void finish(int exit_code)
    {
        doc["end_time"] = utc_now();
        doc["exit_code"] = exit_code;
        write();
    }
};

template <class T>
std::vector<T> parse_list(const std::string& s, const std::function<T(const std::string&)>& conv)
{
    std::vector<T> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty())
            out.push_back(conv(item));
    if (out.empty())
        throw ContractError("empty list '" + s + "'");
    return out;
}

inline std::size_t parse_size(const std::string& s)
{
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        if (s.starts_with("2^"))
            return std::size_t{1} << std::stoul(s.substr(2));
        v = std::stoull(s, &pos);
    } catch (const std::exception&) {
        throw ContractError("not a non-negative integer: '" + s + "'");
    }
    if (pos != s.size())
        throw ContractError("not a non-negative integer: '" + s + "'");
    return static_cast<std::size_t>(v);
}

inline std::vector<std::size_t> parse_sizes(const std::string& s)
{
    return parse_list<std::size_t>(s, parse_size);
}

inline std::string join(const std::vector<std::size_t>& v)
{
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i)
        out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

// ---------------------------------------------------------------------------
// train / eval configuration

struct RunConfig {
    std::string neuron = "psn";
    std::size_t order = 4;
    std::string reset = "default";  // default | hard | soft | none
    bool detach_reset = false;
    double tau = 2.0;
    std::string data = "toy";
    std::size_t classes = 4;
    std::size_t train_per_class = 500;
    std::size_t test_per_class = 125;
    std::vector<std::size_t> hidden{64, 64};
    int epochs = 50;
    std::size_t batch_size = 64;
    double lr = 0.1;
    std::string optimizer = "sgd";
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::string schedule = "cosine";
    std::string loss = "ce";
    double label_smoothing = 0.0;
    bool lambda_schedule = true;
    double alpha = 4.0;
    std::uint64_t seed = 0;

    json to_json() const
    {
        return json{{"neuron", neuron},
                    {"order", order},
                    {"reset", reset},
                    {"detach_reset", detach_reset},
                    {"tau", tau},
                    {"data", data},
                    {"classes", classes},
                    {"train_per_class", train_per_class},
                    {"test_per_class", test_per_class},
                    {"hidden", hidden},
                    {"epochs", epochs},
                    {"batch_size", batch_size},
                    {"lr", lr},
                    {"optimizer", optimizer},
                    {"momentum", momentum},
                    {"weight_decay", weight_decay},
                    {"schedule", schedule},
                    {"loss", loss},
                    {"label_smoothing", label_smoothing},
                    {"lambda_schedule", lambda_schedule},
                    {"alpha", alpha},
                    {"seed", seed}};
    }

    static RunConfig from_json(const json& j)
    {
        RunConfig c;
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key))
                j.at(key).get_to(field);
        };
        get("neuron", c.neuron);
        get("order", c.order);
        get("reset", c.reset);
        get("detach_reset", c.detach_reset);
        get("tau", c.tau);
        get("data", c.data);
        get("classes", c.classes);
        get("train_per_class", c.train_per_class);
        get("test_per_class", c.test_per_class);
        get("hidden", c.hidden);
        get("epochs", c.epochs);
        get("batch_size", c.batch_size);
        get("lr", c.lr);
        get("optimizer", c.optimizer);
        get("momentum", c.momentum);
        get("weight_decay", c.weight_decay);
        get("schedule", c.schedule);
        get("loss", c.loss);
        get("label_smoothing", c.label_smoothing);
        get("lambda_schedule", c.lambda_schedule);
        get("alpha", c.alpha);
        get("seed", c.seed);
        return c;
    }

    TrainConfig train_config() const
    {
        TrainConfig t;
        t.epochs = epochs;
        t.batch_size = batch_size;
        t.learning_rate = lr;
        t.optimizer = parse_optimizer(optimizer);
        t.momentum = momentum;
        t.weight_decay = weight_decay;
        t.schedule = parse_schedule(schedule);
        if (loss == "ce")
            t.loss = LossKind::ce_mean_output;
        else if (loss == "tet")
            t.loss = LossKind::tet;
        else
            throw ContractError("unknown loss '" + loss + "' (expected ce or tet)");
        t.label_smoothing = label_smoothing;
        t.lambda_schedule_enabled = lambda_schedule;
        t.surrogate_alpha = alpha;
        t.seed = seed;
        t.validate();
        return t;
    }
};

struct Splits {
    data::SequenceBatch train, test;
    std::size_t classes = 0;
};

/// Toy data or "idx:<images>,<labels>" (the last fifth is held out for test).
inline Splits load_data(const RunConfig& c)
{
    Splits s;
    data::ImageSet train, test;
    if (c.data == "toy") {
        auto ds = data::synth_toy_dataset(c.classes, c.train_per_class, c.seed, c.test_per_class);
        train = std::move(ds.train);
        test = std::move(ds.test);
    } else if (c.data.starts_with("idx:")) {
        const auto spec = c.data.substr(4);
        const auto comma = spec.find(',');
        if (comma == std::string::npos)
            throw ContractError("--data idx:<images>,<labels>");
        auto all = data::load_idx_dataset(spec.substr(0, comma), spec.substr(comma + 1));
        const std::size_t n = all.labels.size(), n_test = std::max<std::size_t>(1, n / 5);
        if (n < 2)
            throw ContractError("IDX dataset needs at least 2 images");
        const std::size_t rows = all.images.dim(1), cols = all.images.dim(2);
        auto slice = [&](std::size_t lo, std::size_t hi) {
            data::ImageSet part;
            part.num_classes = all.num_classes;
            part.images = Tensor<float>({hi - lo, rows, cols});
            auto src = all.images.data();
            std::copy(src.begin() + static_cast<std::ptrdiff_t>(lo * rows * cols),
                      src.begin() + static_cast<std::ptrdiff_t>(hi * rows * cols), part.images.mutable_data().begin());
            part.labels.assign(all.labels.begin() + static_cast<std::ptrdiff_t>(lo),
                               all.labels.begin() + static_cast<std::ptrdiff_t>(hi));
            return part;
        };
        train = slice(0, n - n_test);
        test = slice(n - n_test, n);
    } else {
        throw ContractError("unknown --data '" + c.data + "' (expected toy or idx:<images>,<labels>)");
    }
    const auto stats = data::compute_stats(train.images);
    s.classes = std::max(train.num_classes, test.num_classes);
    s.train = data::columnize(train, true, stats, c.data);
    s.test = data::columnize(test, true, stats, c.data);
    return s;
}

inline ModelSpec model_spec(const RunConfig& c, std::size_t input_dim, std::size_t steps, std::size_t classes)
{
    const auto kind = parse_neuron_kind(c.neuron);
    auto spec = ModelSpec::mlp(input_dim, c.hidden, classes, kind, steps, c.order, c.seed);
    for (auto& l : spec.layers) {
        if (l.type != LayerSpec::Type::neuron || is_parallel_family(kind))
            continue;
        if (l.vanilla.charge == Charge::leaky)
            l.vanilla.tau_m = c.tau;
        if (c.reset == "hard")
            l.vanilla.reset = ResetMode::hard;
        else if (c.reset == "soft")
            l.vanilla.reset = ResetMode::soft;
        else if (c.reset == "none")
            l.vanilla.reset = ResetMode::none;
        else if (c.reset != "default")
            throw ContractError("unknown --reset '" + c.reset + "'");
        l.vanilla.detach_reset = c.detach_reset;
    }
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// commands

struct Streams {
    std::ostream& out;
    std::ostream& err;
};

inline int cmd_bench(const bench::BenchConfig& cfg, const fs::path& csv, const fs::path& manifest_path, int threads,
                     Streams io)
{
    json config{{"mode", std::string(bench::to_string(cfg.mode))},
                {"n_values", cfg.n_values},
                {"t_values", cfg.t_values},
                {"warmup_iters", cfg.warmup_iters},
                {"measured_iters", cfg.measured_iters},
                {"order", cfg.order},
                {"skip_large", cfg.skip_large}};
    json kinds = json::array();
    for (auto k : cfg.kinds)
        kinds.push_back(std::string(to_string(k)));
    config["kinds"] = kinds;
    Manifest m(manifest_path, "bench", config, cfg.seed, threads, json{{"csv", csv.string()}});
    const auto rows = bench::run_grid(cfg);
    io::write_atomic(csv, bench::to_csv(rows));
    io.out << bench::grid_table(rows) << "wrote " << rows.size() << " records to " << csv.string() << "\n";
    m.finish(ok);
    return ok;
}

inline int cmd_memory(const std::vector<std::size_t>& ts, const std::vector<std::size_t>& ns, std::uint64_t seed,
                      const fs::path& csv, const fs::path& manifest_path, int threads, Streams io)
{
    Manifest m(manifest_path, "memory", json{{"t_values", ts}, {"n_values", ns}, {"stack", bench::memory_stack_widths()}},
               seed, threads, json{{"csv", csv.string()}});
    std::ostringstream table;
    table << "configuration,T,N,peak_tracked_bytes\n";
    io.out << std::setw(4) << "T" << std::setw(6) << "N" << std::setw(14) << "M_NO" << std::setw(14) << "d_IF"
           << std::setw(14) << "d_PSN" << std::setw(8) << "ratio" << std::setw(12) << "diff/(TN)" << "\n";
    for (auto t : ts)
        for (auto n : ns) {
            const auto r = bench::bench_memory(t, n, seed);
            for (const auto* rec : {&r.no_neuron, &r.if_neuron, &r.psn})
                table << bench::to_string(rec->config) << ',' << t << ',' << n << ',' << rec->peak_tracked_bytes << "\n";
            io.out << std::setw(4) << t << std::setw(6) << n << std::setw(14) << r.no_neuron.peak_tracked_bytes
                   << std::setw(14) << static_cast<long long>(r.delta_if()) << std::setw(14)
                   << static_cast<long long>(r.delta_psn()) << std::setw(8) << std::fixed << std::setprecision(3)
                   << r.ratio() << std::setw(12) << std::setprecision(1) << r.per_cell_difference() << "\n";
        }
    io::write_atomic(csv, table.str());
    m.finish(ok);
    return ok;
}

inline int cmd_train(const RunConfig& c, const fs::path& out_dir, int threads, Streams io)
{
    const auto tcfg = c.train_config();
    const auto history_path = out_dir / "history.tsv";
    const auto ckpt_path = out_dir / "checkpoint.psnckpt";
    Manifest m(out_dir / "manifest.json", "train", c.to_json(), c.seed, threads,
               json{{"history", history_path.string()}, {"checkpoint", ckpt_path.string()}});
    auto splits = load_data(c);
    Model model(model_spec(c, splits.train.inputs.dim(2), splits.train.inputs.dim(0), splits.classes));
    History history;
    auto on_epoch = [&](const EpochRecord& r) {
        history.push_back(r);
        io.out << "epoch " << r.epoch << " loss " << std::setprecision(6) << r.train_loss << " train_acc "
               << r.train_accuracy << " test_acc " << r.test_accuracy.value_or(0.0);
        if (r.lambda)
            io.out << " lambda " << *r.lambda;
        io.out << "\n";
    };
    try {
        train(model, splits.train, &splits.test, tcfg, on_epoch);
    } catch (const DivergenceError& e) {
        io::write_atomic(history_path, format_history(history));
        io.err << "diverged: " << e.what() << "\n";
        m.finish(diverged);
        return diverged;
    }
    io::write_atomic(history_path, format_history(history));
    checkpoint::save(ckpt_path, model.state_dict());
    m.finish(ok);
    return ok;
}

inline int cmd_eval(const fs::path& run_dir, const fs::path& ckpt_override, int threads, Streams io)
{
    const auto doc = json::parse(io::read_all(run_dir / "manifest.json"));
    const auto c = RunConfig::from_json(doc.at("config"));
    const auto ckpt = ckpt_override.empty() ? run_dir / "checkpoint.psnckpt" : ckpt_override;
    Manifest m(run_dir / "eval_manifest.json", "eval", c.to_json(), c.seed, threads, json{{"checkpoint", ckpt.string()}});
    auto splits = load_data(c);
    Model model(model_spec(c, splits.train.inputs.dim(2), splits.train.inputs.dim(0), splits.classes));
    model.set_lambda(1.0);
    model.load_state_dict(checkpoint::load(ckpt));
    SurrogateConfig scfg;
    scfg.alpha = c.alpha;
    const auto r = evaluate(model, splits.test, 256, scfg);
    io.out << "test_accuracy " << std::setprecision(6) << r.accuracy << "\n";
    for (std::size_t k = 0; k < r.firing_rates.size(); ++k)
        io.out << "firing_rate_" << k << " " << r.firing_rates[k] << "\n";
    m.doc["result"] = json{{"test_accuracy", r.accuracy}, {"firing_rates", r.firing_rates}};
    m.finish(ok);
    return ok;
}

inline int cmd_verify(const std::vector<std::string>& suites, const verify::Grid& grid, bool corrupt_scan,
                      const fs::path& manifest_path, int threads, Streams io)
{
    Manifest m(manifest_path, "verify",
               json{{"suites", suites}, {"seeds", grid.seeds}, {"t_max", grid.t_max}, {"corrupt_scan", corrupt_scan}}, 0,
               threads, json::object());
    scan::testing::corrupt_combine() = corrupt_scan;
    bool all = true;
    json results = json::array();
    for (const auto& name : suites) {
        const auto r = verify::run_suite(name, grid);
        all &= r.passed;
        io.out << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.cases << " cases)";
        if (!r.passed)
            io.out << "  witness: " << r.witness;
        io.out << "\n";
        results.push_back(json{{"suite", r.name}, {"passed", r.passed}, {"cases", r.cases}, {"witness", r.witness}});
    }
    scan::testing::corrupt_combine() = false;
    m.doc["results"] = results;
    const int code = all ? ok : verification_failed;
    m.finish(code);
    return code;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    Streams io{out, err};
    CLI::App app{"Parallel spiking neuron benchmarks, training and self-checks", "psn"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(PSN_VERSION));
    int threads = threads_from_env();
    app.add_option("--threads", threads, "Kernel thread cap (0 = runtime default; env PSN_THREADS)")
        ->check(CLI::NonNegativeNumber);

    // bench
    auto* b = app.add_subcommand("bench", "Wall-time grid against the serial LIF baseline");
    std::string b_mode = "inference", b_kinds = "lif,psn", b_ns = "256,4096,65536,1048576", b_ts = "2,4,8,16,32,64";
    std::string b_out = "bench.csv", b_manifest;
    bench::BenchConfig bcfg;
    b->add_option("--mode", b_mode, "inference | training")->check(CLI::IsMember({"inference", "training"}));
    b->add_option("--kinds", b_kinds, "Comma-separated neuron kinds");
    b->add_option("--n-values", b_ns, "Comma-separated N values (2^k accepted)");
    b->add_option("--t-values", b_ts, "Comma-separated T values");
    b->add_option("--out", b_out, "CSV output path");
    b->add_option("--manifest-out", b_manifest, "Manifest path (default <out>.manifest.json)");
    b->add_flag("--skip-large", bcfg.skip_large, "Skip N >= 2^20 cells");
    b->add_option("--warmup", bcfg.warmup_iters, "Warmup iterations")->check(CLI::NonNegativeNumber);
    b->add_option("--iters", bcfg.measured_iters, "Measured iterations (>= 3, median reported)")
        ->check(CLI::Range(3, 1000000));
    b->add_option("--order", bcfg.order, "Order k for masked / sliding PSN")->check(CLI::PositiveNumber);
    b->add_option("--seed", bcfg.seed, "Input seed");

    // memory
    auto* mem = app.add_subcommand("memory", "Tracked peak bytes of one training step: no neuron vs IF vs PSN");
    std::string m_ts = "8,16,32", m_ns = "16", m_out = "memory.csv", m_manifest;
    std::uint64_t m_seed = 0;
    mem->add_option("--t-values", m_ts, "Comma-separated T values");
    mem->add_option("--n-values", m_ns, "Comma-separated batch sizes");
    mem->add_option("--out", m_out, "CSV output path");
    mem->add_option("--manifest-out", m_manifest, "Manifest path (default <out>.manifest.json)");
    mem->add_option("--seed", m_seed, "Seed");

    // train
    auto* tr = app.add_subcommand("train", "Train a classifier on column sequences");
    RunConfig rc;
    std::string t_hidden = "64,64", t_out = "run", t_manifest;
    tr->add_option("--neuron", rc.neuron, "psn | masked-psn | spsn | lif | if | lif-no-reset | if-no-reset")
        ->check(CLI::IsMember({"psn", "masked-psn", "spsn", "lif", "if", "lif-no-reset", "if-no-reset"}));
    tr->add_option("--order", rc.order, "Order k for masked / sliding PSN")->check(CLI::PositiveNumber);
    tr->add_option("--reset", rc.reset, "Reset override for vanilla neurons")
        ->check(CLI::IsMember({"default", "hard", "soft", "none"}));
    tr->add_flag("--detach-reset", rc.detach_reset, "Block the gradient through the reset");
    tr->add_option("--tau", rc.tau, "LIF membrane time constant");
    tr->add_option("--epochs", rc.epochs, "Epochs")->check(CLI::PositiveNumber);
    tr->add_option("--seed", rc.seed, "Seed for data, init and shuffling");
    tr->add_option("--data", rc.data, "toy | idx:<images>,<labels>");
    tr->add_option("--classes", rc.classes, "Toy classes (2..10)");
    tr->add_option("--train-per-class", rc.train_per_class, "Toy training samples per class");
    tr->add_option("--test-per-class", rc.test_per_class, "Toy test samples per class");
    tr->add_option("--hidden", t_hidden, "Comma-separated hidden widths");
    tr->add_option("--batch-size", rc.batch_size, "Batch size")->check(CLI::PositiveNumber);
    tr->add_option("--lr", rc.lr, "Base learning rate")->check(CLI::NonNegativeNumber);
    tr->add_option("--optimizer", rc.optimizer, "sgd | adamw")->check(CLI::IsMember({"sgd", "adamw"}));
    tr->add_option("--momentum", rc.momentum, "SGD momentum");
    tr->add_option("--weight-decay", rc.weight_decay, "Weight decay");
    tr->add_option("--schedule", rc.schedule, "cosine | step | constant")
        ->check(CLI::IsMember({"cosine", "step", "constant"}));
    tr->add_option("--loss", rc.loss, "ce | tet")->check(CLI::IsMember({"ce", "tet"}));
    tr->add_option("--label-smoothing", rc.label_smoothing, "Label smoothing")->check(CLI::Range(0.0, 0.999));
    tr->add_option("--alpha", rc.alpha, "Surrogate sharpness")->check(CLI::PositiveNumber);
    bool no_lambda = false;
    tr->add_flag("--no-lambda-schedule", no_lambda, "Keep the masked PSN at lambda = 1");
    tr->add_option("--out-dir", t_out, "Directory for history, checkpoint and manifest");
    tr->add_option("--manifest", t_manifest, "Rerun with the config stored in this manifest");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a trained run on its test split");
    std::string e_run, e_ckpt;
    ev->add_option("--run-dir", e_run, "Training output directory")->required();
    ev->add_option("--checkpoint", e_ckpt, "Checkpoint override");

    // verify
    auto* vf = app.add_subcommand("verify", "Run the equivalence and gradient self-checks");
    std::vector<std::string> v_suites;
    verify::Grid grid;
    bool v_corrupt = false;
    std::string v_manifest = "psn_verify.manifest.json";
    vf->add_option("--suite", v_suites, "Suite(s) to run (default all)")->check(CLI::IsMember(verify::suite_names()));
    vf->add_option("--seeds", grid.seeds, "Random seeds per grid cell")->check(CLI::PositiveNumber);
    vf->add_flag("--corrupt-scan", v_corrupt, "Fault injection: drop the carry in the scan combine");
    vf->add_option("--manifest-out", v_manifest, "Manifest path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ok : usage;
    }

    set_num_threads(threads);
    const int used_threads = num_threads();
    try {
        if (*b) {
            bcfg.mode = bench::parse_mode(b_mode);
            bcfg.kinds = parse_list<NeuronKind>(b_kinds, [](const std::string& s) { return parse_neuron_kind(s); });
            bcfg.n_values = parse_sizes(b_ns);
            bcfg.t_values = parse_sizes(b_ts);
            bcfg.validate();
            return cmd_bench(bcfg, b_out, b_manifest.empty() ? b_out + ".manifest.json" : b_manifest, used_threads, io);
        }
        if (*mem)
            return cmd_memory(parse_sizes(m_ts), parse_sizes(m_ns), m_seed, m_out,
                              m_manifest.empty() ? m_out + ".manifest.json" : m_manifest, used_threads, io);
        if (*tr) {
            if (!t_manifest.empty()) {
                rc = RunConfig::from_json(json::parse(io::read_all(t_manifest)).at("config"));
            } else {
                rc.hidden = parse_sizes(t_hidden);
                rc.lambda_schedule = !no_lambda;
            }
            rc.train_config();
            parse_neuron_kind(rc.neuron);
            return cmd_train(rc, t_out, used_threads, io);
        }
        if (*ev)
            return cmd_eval(e_run, e_ckpt, used_threads, io);
        if (*vf)
            return cmd_verify(v_suites.empty() ? verify::suite_names() : v_suites, grid, v_corrupt, v_manifest,
                              used_threads, io);
    } catch (const DivergenceError& e) {
        err << "diverged: " << e.what() << "\n";
        return diverged;
    } catch (const ContractError& e) {
        err << "error: " << e.what() << "\n";
        return usage;
    } catch (const DimensionError& e) {
        err << "error: " << e.what() << "\n";
        return usage;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return usage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return usage;
    }
    return usage;
}

} // namespace psn::cli
