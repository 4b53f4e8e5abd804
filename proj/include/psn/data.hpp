#pragma once

// Column-sequence inputs: images [N, H, W] are presented one column per time
// step, giving sequences [T = W, N, C = H].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "psn/io.hpp"
#include "psn/tensor.hpp"

namespace psn::data {

struct NormStats {
    double mean = 0.0;
    double stddev = 1.0;
};

struct ImageSet {
    Tensor<float> images;  // [N, H, W]
    std::vector<int> labels;
    std::size_t num_classes = 0;
};

struct SequenceBatch {
    Tensor<float> inputs;  // [T, N, C]
    std::vector<int> labels;
    std::string source;
    NormStats stats;
    bool normalized = false;

    std::size_t size() const { return labels.size(); }
};

inline NormStats compute_stats(const Tensor<float>& images)
{
    const auto d = images.data();
    if (d.empty())
        throw ContractError("cannot compute statistics of an empty image set");
    const double n = static_cast<double>(d.size());
    double s = 0.0;
    for (float v : d)
        s += v;
    const double mean = s / n;
    double ss = 0.0;
    for (float v : d)
        ss += (v - mean) * (v - mean);
    const double var = ss / n;
    return {mean, var > 0.0 ? std::sqrt(var) : 1.0};
}

/// out[t, n, c] = (img[n, c, t] - mean) / std when normalizing.
inline SequenceBatch columnize(const ImageSet& set, bool normalize, std::optional<NormStats> stats = std::nullopt,
                               std::string source = "")
{
    const auto& img = set.images;
    if (img.rank() != 3)
        throw DimensionError("columnize expects images[N, H, W], got " + shape_str(img.shape()));
    const std::size_t n = img.dim(0), rows = img.dim(1), cols = img.dim(2);
    if (n == 0)
        throw ContractError("columnize: empty batch");
    if (set.labels.size() != n)
        throw ContractError("columnize: " + std::to_string(set.labels.size()) + " labels for " + std::to_string(n)
                            + " images");
    SequenceBatch b;
    b.labels = set.labels;
    b.source = std::move(source);
    b.normalized = normalize;
    b.stats = normalize ? stats.value_or(compute_stats(img)) : NormStats{};
    b.inputs = Tensor<float>({cols, n, rows});
    auto out = b.inputs.mutable_data();
    const auto src = img.data();
    const double shift = b.stats.mean, inv = 1.0 / b.stats.stddev;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t t = 0; t < cols; ++t) {
                const float v = src[(i * rows + r) * cols + t];
                out[(t * n + i) * rows + r] = normalize ? static_cast<float>((v - shift) * inv) : v;
            }
    return b;
}

/// Inverse of columnize without normalization.
inline Tensor<float> decolumnize(const Tensor<float>& seq)
{
    if (seq.rank() != 3)
        throw DimensionError("decolumnize expects [T, N, C], got " + shape_str(seq.shape()));
    const std::size_t cols = seq.dim(0), n = seq.dim(1), rows = seq.dim(2);
    Tensor<float> img({n, rows, cols});
    auto out = img.mutable_data();
    const auto src = seq.data();
    for (std::size_t t = 0; t < cols; ++t)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t r = 0; r < rows; ++r)
                out[(i * rows + r) * cols + t] = src[(t * n + i) * rows + r];
    return img;
}

/// Rows `indices` of a sequence batch (batch axis is axis 1).
inline SequenceBatch gather(const SequenceBatch& b, const std::vector<std::size_t>& indices)
{
    const std::size_t steps = b.inputs.dim(0), n = b.inputs.dim(1), c = b.inputs.dim(2);
    SequenceBatch out;
    out.source = b.source;
    out.stats = b.stats;
    out.normalized = b.normalized;
    out.inputs = Tensor<float>({steps, indices.size(), c});
    auto dst = out.inputs.mutable_data();
    const auto src = b.inputs.data();
    for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t j = 0; j < indices.size(); ++j) {
            const std::size_t i = indices[j];
            if (i >= n)
                throw ContractError("gather index out of range");
            std::copy_n(src.begin() + static_cast<std::ptrdiff_t>((t * n + i) * c), c,
                        dst.begin() + static_cast<std::ptrdiff_t>((t * indices.size() + j) * c));
        }
    for (auto i : indices)
        out.labels.push_back(b.labels[i]);
    return out;
}

// ---------------------------------------------------------------------------
// synthetic temporal task

inline constexpr std::size_t kToySize = 16;

/// Gap range (inclusive) between the two strokes for a gap bucket.
inline std::pair<std::size_t, std::size_t> toy_gap_range(std::size_t bucket, std::size_t buckets)
{
    const std::size_t span = std::max<std::size_t>(2, 12 / buckets);
    const std::size_t lo = 2 + bucket * span;
    return {lo, lo + span / 2};
}

/// Each 16x16 image holds two one-column strokes, one in the top band
/// (rows 2-5) and one in the bottom band (rows 10-13), over low-level noise.
/// Class c encodes which band comes first (c % 2) and a bucket of the time
/// gap between the strokes (c / 2). Every image contains the same bag of
/// columns up to noise, so a model without memory sits at chance.
inline ImageSet toy_split(std::size_t num_classes, std::size_t per_class, std::uint64_t seed)
{
    const std::size_t buckets = (num_classes + 1) / 2;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> noise(0.0f, 0.2f), amp(0.8f, 1.2f);
    const std::size_t n = num_classes * per_class;
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i)
        labels[i] = static_cast<int>(i % num_classes);
    std::shuffle(labels.begin(), labels.end(), rng);

    ImageSet set{Tensor<float>({n, kToySize, kToySize}), labels, num_classes};
    auto d = set.images.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
        float* img = d.data() + i * kToySize * kToySize;
        for (std::size_t p = 0; p < kToySize * kToySize; ++p)
            img[p] = noise(rng);
        const auto c = static_cast<std::size_t>(labels[i]);
        const auto [glo, ghi] = toy_gap_range(c / 2, buckets);
        const std::size_t gap = std::uniform_int_distribution<std::size_t>(glo, ghi)(rng);
        const std::size_t onset = std::uniform_int_distribution<std::size_t>(0, kToySize - 1 - gap)(rng);
        const bool top_first = c % 2 == 0;
        const std::size_t first_row = top_first ? 2 : 10, second_row = top_first ? 10 : 2;
        for (std::size_t r = 0; r < 4; ++r) {
            img[(first_row + r) * kToySize + onset] = amp(rng);
            img[(second_row + r) * kToySize + onset + gap] = amp(rng);
        }
    }
    return set;
}

struct ToyDataset {
    ImageSet train, test;
};

/// Train and test come from independent seed streams.
inline ToyDataset synth_toy_dataset(std::size_t num_classes, std::size_t samples_per_class, std::uint64_t seed,
                                    std::size_t test_per_class = 0)
{
    if (num_classes < 2 || num_classes > 10)
        throw ContractError("toy dataset supports 2..10 classes");
    if (samples_per_class == 0)
        throw ContractError("toy dataset needs samples_per_class >= 1");
    if (test_per_class == 0)
        test_per_class = std::max<std::size_t>(1, samples_per_class / 4);
    std::seed_seq train_seq{seed, std::uint64_t{0}}, test_seq{seed, std::uint64_t{1}};
    std::uint64_t train_seed = 0, test_seed = 0;
    {
        std::vector<std::uint64_t> a(1), b(1);
        train_seq.generate(a.begin(), a.end());
        test_seq.generate(b.begin(), b.end());
        train_seed = a[0];
        test_seed = b[0];
    }
    return {toy_split(num_classes, samples_per_class, train_seed), toy_split(num_classes, test_per_class, test_seed)};
}

// ---------------------------------------------------------------------------
// IDX files (big-endian)

inline constexpr std::uint32_t kIdxImages = 0x00000803;
inline constexpr std::uint32_t kIdxLabels = 0x00000801;

namespace detail {

inline std::uint32_t read_be32(std::string_view b, std::size_t at)
{
    if (at + 4 > b.size())
        throw ParseError("truncated IDX header", b.size());
    return (std::uint32_t(std::uint8_t(b[at])) << 24) | (std::uint32_t(std::uint8_t(b[at + 1])) << 16)
           | (std::uint32_t(std::uint8_t(b[at + 2])) << 8) | std::uint32_t(std::uint8_t(b[at + 3]));
}

inline void put_be32(std::string& out, std::uint32_t v)
{
    for (int s = 24; s >= 0; s -= 8)
        out.push_back(static_cast<char>((v >> s) & 0xff));
}

inline void check_magic(std::string_view b, std::uint32_t want)
{
    const auto magic = read_be32(b, 0);
    if (magic != want) {
        std::ostringstream m;
        m << "bad IDX magic 0x" << std::hex << magic << ", expected 0x" << want;
        throw ParseError(m.str(), 0);
    }
}

} // namespace detail

/// Pixel values are returned unscaled (0..255).
inline Tensor<float> parse_idx_images(std::string_view b)
{
    detail::check_magic(b, kIdxImages);
    const std::size_t n = detail::read_be32(b, 4), rows = detail::read_be32(b, 8), cols = detail::read_be32(b, 12);
    const std::size_t need = 16 + n * rows * cols;
    if (b.size() < need)
        throw ParseError("IDX image payload truncated: need " + std::to_string(need) + " bytes", b.size());
    Tensor<float> out({n, rows, cols});
    auto d = out.mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i)
        d[i] = static_cast<float>(static_cast<std::uint8_t>(b[16 + i]));
    return out;
}

inline std::vector<int> parse_idx_labels(std::string_view b)
{
    detail::check_magic(b, kIdxLabels);
    const std::size_t n = detail::read_be32(b, 4);
    if (b.size() < 8 + n)
        throw ParseError("IDX label payload truncated: need " + std::to_string(8 + n) + " bytes", b.size());
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = static_cast<std::uint8_t>(b[8 + i]);
    return out;
}

inline Tensor<float> load_idx_images(const std::filesystem::path& p) { return parse_idx_images(io::read_all(p)); }
inline std::vector<int> load_idx_labels(const std::filesystem::path& p) { return parse_idx_labels(io::read_all(p)); }

/// Values are rounded and clamped to 0..255.
inline std::string encode_idx_images(const Tensor<float>& images)
{
    if (images.rank() != 3)
        throw DimensionError("IDX images must be [N, H, W], got " + shape_str(images.shape()));
    std::string out;
    detail::put_be32(out, kIdxImages);
    for (std::size_t k = 0; k < 3; ++k)
        detail::put_be32(out, static_cast<std::uint32_t>(images.dim(k)));
    for (float v : images.data())
        out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L))));
    return out;
}

inline std::string encode_idx_labels(const std::vector<int>& labels)
{
    std::string out;
    detail::put_be32(out, kIdxLabels);
    detail::put_be32(out, static_cast<std::uint32_t>(labels.size()));
    for (int y : labels) {
        if (y < 0 || y > 255)
            throw ContractError("IDX labels must lie in 0..255");
        out.push_back(static_cast<char>(y));
    }
    return out;
}

/// One integer label per line or comma-separated; blank lines ignored.
inline std::vector<int> parse_csv_labels(std::string_view text)
{
    std::vector<int> out;
    std::string tok;
    std::size_t at = 0;
    auto flush = [&](std::size_t pos) {
        auto first = tok.find_first_not_of(" \t\r");
        if (first == std::string::npos) {
            tok.clear();
            return;
        }
        auto last = tok.find_last_not_of(" \t\r");
        auto s = tok.substr(first, last - first + 1);
        if (s.find_first_not_of("0123456789") != std::string::npos)
            throw ParseError("bad label '" + s + "'", pos);
        out.push_back(std::stoi(s));
        tok.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char ch = text[i];
        if (ch == ',' || ch == '\n') {
            flush(at);
            at = i + 1;
        } else {
            tok.push_back(ch);
        }
    }
    flush(at);
    return out;
}

inline std::size_t infer_classes(const std::vector<int>& labels)
{
    int mx = -1;
    for (int y : labels) {
        if (y < 0)
            throw ContractError("negative label");
        mx = std::max(mx, y);
    }
    return static_cast<std::size_t>(mx + 1);
}

/// Images plus labels from IDX (or a CSV label file when the label path ends in .csv).
inline ImageSet load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels)
{
    ImageSet set;
    set.images = load_idx_images(images);
    set.labels = labels.extension() == ".csv" ? parse_csv_labels(io::read_all(labels)) : load_idx_labels(labels);
    if (set.labels.size() != set.images.dim(0))
        throw ContractError("label count " + std::to_string(set.labels.size()) + " does not match image count "
                            + std::to_string(set.images.dim(0)));
    set.num_classes = std::max<std::size_t>(2, infer_classes(set.labels));
    return set;
}

} // namespace psn::data
