#include <filesystem>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "psn/data.hpp"

using namespace psn;
using namespace psn::data;

namespace {

ImageSet random_images(std::size_t n, std::size_t rows, std::size_t cols, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 255.0f);
    ImageSet s{Tensor<float>({n, rows, cols}), std::vector<int>(n), 3};
    for (auto& v : s.images.mutable_data())
        v = u(rng);
    for (std::size_t i = 0; i < n; ++i)
        s.labels[i] = static_cast<int>(i % 3);
    return s;
}

std::filesystem::path temp_path(const std::string& name)
{
    return std::filesystem::temp_directory_path() / ("psn_data_test_" + name);
}

} // namespace

TEST(Columnize, HandExample)
{
    // One 2x3 image: rows are channels, columns are time steps.
    ImageSet s{Tensor<float>({1, 2, 3}, {1, 2, 3, 4, 5, 6}), {0}, 2};
    auto b = columnize(s, false);
    EXPECT_EQ(b.inputs.shape(), (Shape{3, 1, 2}));
    EXPECT_EQ(b.inputs.to_vector(), (std::vector<float>{1, 4, 2, 5, 3, 6}));
    EXPECT_FALSE(b.normalized);
}

TEST(Columnize, NormalizedWithGivenStats)
{
    ImageSet s{Tensor<float>({1, 1, 2}, {3, 5}), {1}, 2};
    auto b = columnize(s, true, NormStats{1.0, 2.0});
    EXPECT_EQ(b.inputs.to_vector(), (std::vector<float>{1, 2}));
    EXPECT_TRUE(b.normalized);
}

TEST(Columnize, ConstantImageHasUnitStddev)
{
    ImageSet s{Tensor<float>({2, 3, 3}), {0, 1}, 2};
    for (auto& v : s.images.mutable_data())
        v = 7.0f;
    auto stats = compute_stats(s.images);
    EXPECT_DOUBLE_EQ(stats.mean, 7.0);
    EXPECT_DOUBLE_EQ(stats.stddev, 1.0);
    const auto b = columnize(s, true);
    for (float v : b.inputs.data())
        EXPECT_EQ(v, 0.0f);
}

TEST(Columnize, BijectionOnRandomImages)
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 g(seed);
        const std::size_t n = 1 + g() % 5, rows = 1 + g() % 7, cols = 1 + g() % 7;
        auto s = random_images(n, rows, cols, seed);
        auto back = decolumnize(columnize(s, false).inputs);
        EXPECT_EQ(back.shape(), s.images.shape());
        EXPECT_EQ(back.to_vector(), s.images.to_vector()) << "seed " << seed;
    }
}

TEST(Columnize, RejectsEmptyAndMismatchedLabels)
{
    EXPECT_THROW(columnize(ImageSet{Tensor<float>(Shape{0, 2, 2}), {}, 2}, false), ContractError);
    EXPECT_THROW(columnize(ImageSet{Tensor<float>({2, 2, 2}), {0}, 2}, false), ContractError);
    EXPECT_THROW(columnize(ImageSet{Tensor<float>(Shape{2, 2}), {0, 1}, 2}, false), DimensionError);
}

TEST(Gather, SelectsBatchColumns)
{
    auto b = columnize(random_images(5, 2, 4, 1), false);
    auto g = gather(b, {4, 0});
    EXPECT_EQ(g.inputs.shape(), (Shape{4, 2, 2}));
    EXPECT_EQ(g.labels, (std::vector<int>{b.labels[4], b.labels[0]}));
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t c = 0; c < 2; ++c) {
            EXPECT_EQ(g.inputs.data()[(t * 2 + 0) * 2 + c], b.inputs.data()[(t * 5 + 4) * 2 + c]);
            EXPECT_EQ(g.inputs.data()[(t * 2 + 1) * 2 + c], b.inputs.data()[(t * 5 + 0) * 2 + c]);
        }
    EXPECT_THROW(gather(b, {5}), ContractError);
}

TEST(Toy, DeterministicForSeed)
{
    auto a = synth_toy_dataset(4, 20, 9), b = synth_toy_dataset(4, 20, 9), c = synth_toy_dataset(4, 20, 10);
    EXPECT_EQ(a.train.images.to_vector(), b.train.images.to_vector());
    EXPECT_EQ(a.train.labels, b.train.labels);
    EXPECT_NE(a.train.images.to_vector(), c.train.images.to_vector());
}

TEST(Toy, BalancedAndSized)
{
    for (std::size_t classes : {2u, 4u, 7u, 10u}) {
        auto ds = synth_toy_dataset(classes, 12, 3, 5);
        EXPECT_EQ(ds.train.images.shape(), (Shape{classes * 12, kToySize, kToySize}));
        EXPECT_EQ(ds.test.labels.size(), classes * 5);
        std::vector<int> count(classes, 0);
        for (int y : ds.train.labels)
            ++count[static_cast<std::size_t>(y)];
        for (int k : count)
            EXPECT_EQ(k, 12);
    }
}

TEST(Toy, TrainAndTestAreDisjoint)
{
    auto ds = synth_toy_dataset(4, 50, 2);
    const std::size_t px = kToySize * kToySize;
    std::set<std::vector<float>> train;
    auto d = ds.train.images.data();
    for (std::size_t i = 0; i < ds.train.labels.size(); ++i)
        train.insert(std::vector<float>(d.begin() + static_cast<std::ptrdiff_t>(i * px),
                                        d.begin() + static_cast<std::ptrdiff_t>((i + 1) * px)));
    auto t = ds.test.images.data();
    for (std::size_t i = 0; i < ds.test.labels.size(); ++i)
        EXPECT_FALSE(train.count(std::vector<float>(t.begin() + static_cast<std::ptrdiff_t>(i * px),
                                                    t.begin() + static_cast<std::ptrdiff_t>((i + 1) * px))));
}

TEST(Toy, StrokePositionsEncodeClass)
{
    auto ds = synth_toy_dataset(4, 30, 4);
    const auto d = ds.train.images.data();
    for (std::size_t i = 0; i < ds.train.labels.size(); ++i) {
        const float* img = d.data() + i * kToySize * kToySize;
        auto stroke_col = [&](std::size_t row) {
            for (std::size_t c = 0; c < kToySize; ++c)
                if (img[row * kToySize + c] >= 0.8f)
                    return static_cast<int>(c);
            return -1;
        };
        const int top = stroke_col(3), bottom = stroke_col(11);
        ASSERT_GE(top, 0);
        ASSERT_GE(bottom, 0);
        const int y = ds.train.labels[i];
        const bool top_first = top < bottom;
        EXPECT_EQ(top_first, y % 2 == 0);
        const auto [lo, hi] = toy_gap_range(static_cast<std::size_t>(y / 2), 2);
        const auto gap = static_cast<std::size_t>(std::abs(top - bottom));
        EXPECT_GE(gap, lo);
        EXPECT_LE(gap, hi);
    }
}

TEST(Toy, RejectsBadClassCounts)
{
    EXPECT_THROW(synth_toy_dataset(1, 10, 0), ContractError);
    EXPECT_THROW(synth_toy_dataset(11, 10, 0), ContractError);
    EXPECT_THROW(synth_toy_dataset(4, 0, 0), ContractError);
}

TEST(Idx, RoundTrip)
{
    ImageSet s = random_images(4, 3, 5, 8);
    for (auto& v : s.images.mutable_data())
        v = std::round(v);
    auto img = parse_idx_images(encode_idx_images(s.images));
    EXPECT_EQ(img.shape(), s.images.shape());
    EXPECT_EQ(img.to_vector(), s.images.to_vector());
    EXPECT_EQ(parse_idx_labels(encode_idx_labels(s.labels)), s.labels);
}

TEST(Idx, TruncationReportsOffset)
{
    auto bytes = encode_idx_images(Tensor<float>({2, 2, 2}));
    bytes.resize(bytes.size() - 1);
    try {
        parse_idx_images(bytes);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), bytes.size());
    }
    EXPECT_THROW(parse_idx_images(std::string("\0\0\x08", 3)), ParseError);
}

TEST(Idx, WrongMagic)
{
    try {
        parse_idx_images(encode_idx_labels({1, 2}));
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 0u);
    }
}

TEST(Idx, CountMismatchIsContractError)
{
    const auto ip = temp_path("img.idx"), lp = temp_path("lbl.idx");
    io::write_atomic(ip, encode_idx_images(Tensor<float>({3, 2, 2})));
    io::write_atomic(lp, encode_idx_labels({0, 1}));
    EXPECT_THROW(load_idx_dataset(ip, lp), ContractError);
    io::write_atomic(lp, encode_idx_labels({0, 1, 4}));
    auto set = load_idx_dataset(ip, lp);
    EXPECT_EQ(set.num_classes, 5u);
    std::filesystem::remove(ip);
    std::filesystem::remove(lp);
}

TEST(Csv, LabelsOnLinesOrCommas)
{
    EXPECT_EQ(parse_csv_labels("1\n2\n\n3\n"), (std::vector<int>{1, 2, 3}));
    EXPECT_EQ(parse_csv_labels(" 4, 5 ,6\r\n7"), (std::vector<int>{4, 5, 6, 7}));
    EXPECT_THROW(parse_csv_labels("1\nx\n"), ParseError);
}

TEST(Csv, DatasetWithCsvLabels)
{
    const auto ip = temp_path("img2.idx"), lp = temp_path("lbl2.csv");
    io::write_atomic(ip, encode_idx_images(Tensor<float>({2, 2, 2})));
    io::write_atomic(lp, "0\n1\n");
    EXPECT_EQ(load_idx_dataset(ip, lp).labels, (std::vector<int>{0, 1}));
    std::filesystem::remove(ip);
    std::filesystem::remove(lp);
}
