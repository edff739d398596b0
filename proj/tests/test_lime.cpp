#include <cmath>

#include <gtest/gtest.h>

#include "evex/lime.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace evex;

namespace {

// Textbook SplitMix64, written out independently of evex/random.hpp.
std::uint64_t reference_splitmix(std::uint64_t& state)
{
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

SegmentMap halves(int w, int h)
{
    SegmentMap m{w, h, std::vector<int>(static_cast<std::size_t>(w * h)), 2};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.labels[static_cast<std::size_t>(y * w + x)] = x < w / 2 ? 0 : 1;
    return m;
}

} // namespace

TEST(Prng, SplitMix64KnownSequence)
{
    SplitMix64 rng(1234567);
    const std::uint64_t expected[] = {6457827717110365317ULL, 3203168211198807973ULL, 9817491932198370423ULL,
                                      4593380528125082431ULL, 16408922859458223821ULL};
    for (auto e : expected) EXPECT_EQ(rng(), e);
}

TEST(Prng, CounterDrawIsTheSequentialStream)
{
    std::uint64_t state = 42;
    for (std::uint64_t i = 0; i < 100; ++i) EXPECT_EQ(counter_draw(42, i), reference_splitmix(state));
}

TEST(Masks, LayoutMatchesDocumentedStream)
{
    const LimeConfig cfg{.n_samples = 30};
    const int k = 7;
    const auto m = generate_masks(k, cfg, 42);
    for (int c = 0; c < k; ++c) EXPECT_EQ(m.row(0)[static_cast<std::size_t>(c)], 1);
    std::uint64_t state = 42;
    for (int r = 1; r < cfg.n_samples; ++r)
        for (int c = 0; c < k; ++c) EXPECT_EQ(m.row(r)[static_cast<std::size_t>(c)], reference_splitmix(state) >> 63);
}

TEST(Masks, Deterministic)
{
    const LimeConfig cfg;
    EXPECT_EQ(generate_masks(12, cfg, 7), generate_masks(12, cfg, 7));
    EXPECT_NE(generate_masks(12, cfg, 7), generate_masks(12, cfg, 8));
}

TEST(Masks, SingleSegment)
{
    const auto m = generate_masks(1, LimeConfig{}, 3);
    EXPECT_EQ(m.cols(), 1);
    EXPECT_EQ(m.rows(), 200);
    EXPECT_EQ(m.row(0)[0], 1);
}

TEST(Masks, BitDensityNearHalf)
{
    const auto m = generate_masks(10, LimeConfig{}, 42);
    int ones = 0;
    for (int r = 1; r < m.rows(); ++r)
        for (auto b : m.row(r)) ones += b;
    const double density = ones / (199.0 * 10.0);
    EXPECT_NEAR(density, 0.5, 0.05);
}

TEST(Masks, RejectsZeroSegments) { EXPECT_THROW(generate_masks(0, LimeConfig{}, 1), ValidationError); }

TEST(ApplyMask, IdentityAllZeroAndPerPixel)
{
    const auto img = fixtures::noise_image(8, 6, 5);
    const auto m = halves(8, 6);
    const std::vector<std::uint8_t> all{1, 1};
    const std::vector<std::uint8_t> none{0, 0};
    const std::vector<std::uint8_t> first{1, 0};
    EXPECT_EQ(apply_mask(img, m, all), img);
    EXPECT_EQ(apply_mask(img, m, none, {9, 8, 7}), Image(8, 6, {9, 8, 7}));
    const auto out = apply_mask(img, m, first);
    for (std::size_t p = 0; p < img.size(); ++p) EXPECT_EQ(out[p], m.labels[p] == 1 ? kBlack : img[p]);
    EXPECT_THROW(apply_mask(img, m, std::vector<std::uint8_t>{1}), ValidationError);
}

TEST(KernelWeight, Formula)
{
    EXPECT_EQ(kernel_weight(std::vector<std::uint8_t>{1, 1, 1}, 0.25), 1.0);
    EXPECT_NEAR(kernel_weight(std::vector<std::uint8_t>{0, 0, 0}, 0.25), std::sqrt(std::exp(-16.0)), 1e-18);
    EXPECT_NEAR(kernel_weight(std::vector<std::uint8_t>{0, 0, 0}, 0.25), 3.355e-4, 1e-7);
    const double d = 1.0 - std::sqrt(0.5);
    EXPECT_NEAR(kernel_weight(std::vector<std::uint8_t>{1, 0, 1, 0}, 0.25), std::sqrt(std::exp(-d * d / 0.0625)), 1e-15);
}

TEST(Explain, ConstantClassifierGivesZeroScoreAndWeights)
{
    const auto img = fixtures::toy_blob(32, 32, 8, 1).image;
    const auto segmap = felzenszwalb(img, 50, 0.5, 20);
    ASSERT_GE(segmap.segment_count, 2);
    ConstantClassifier c(0.7);
    const auto e = explain(img, segmap, c, 1, LimeConfig{}, 42);
    EXPECT_EQ(e.score, 0.0);
    for (double w : e.weights) EXPECT_EQ(w, 0.0);
}

TEST(Explain, BlobSegmentGetsPositiveWeight)
{
    // Segment 0 (left half) is green, segment 1 pink; the classifier responds only to segment 0.
    Image img(64, 64, {190, 100, 170});
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 32; ++x) img.at(x, y) = {40, 190, 60};
    const auto m = halves(64, 64);
    BlobClassifier c{BlobSettings{}};

    // Exhaustive oracle over all four masks with kernel weights.
    oracle::RidgeSolution ref;
    {
        std::vector<std::vector<double>> x;
        std::vector<double> y;
        std::vector<double> w;
        for (int a = 0; a <= 1; ++a)
            for (int b = 0; b <= 1; ++b) {
                const std::vector<std::uint8_t> mask{std::uint8_t(a), std::uint8_t(b)};
                x.push_back({double(a), double(b)});
                y.push_back(c.probability(apply_mask(img, m, mask)));
                w.push_back(std::sqrt(std::exp(-std::pow(a + b == 0 ? 1.0 : 1.0 - std::sqrt((a + b) / 2.0), 2) / 0.0625)));
            }
        ref = oracle::ridge_normal_equations(x, y, w, 1.0);
    }
    ASSERT_GT(ref.coefficients[0], 0.0);
    ASSERT_GT(ref.coefficients[0], ref.coefficients[1]);

    const auto e = explain(img, m, c, 1, LimeConfig{}, 42);
    EXPECT_GT(e.weights[0], 0.0);
    EXPECT_GT(e.weights[0], e.weights[1]);
    EXPECT_EQ(most_relevant_segment(e), 0);
    for (std::size_t p = 0; p < m.labels.size(); ++p)
        EXPECT_EQ(e.pixel_grid[p], e.weights[static_cast<std::size_t>(m.labels[p])]);
}

TEST(Explain, DeterministicForSeed)
{
    const auto scene = fixtures::toy_blob(48, 48, 10, 2);
    const auto m = felzenszwalb(scene.image, 80, 0.5, 30);
    BlobClassifier c{BlobSettings{}};
    const auto a = explain(scene.image, m, c, 1, LimeConfig{}, 42);
    const auto b = explain(scene.image, m, c, 1, LimeConfig{}, 42);
    EXPECT_EQ(a.weights, b.weights);
    EXPECT_EQ(a.r2, b.r2);
    EXPECT_EQ(a.intercept, b.intercept);
    EXPECT_EQ(a.pixel_grid, b.pixel_grid);
}

TEST(Explain, Preconditions)
{
    const auto img = fixtures::noise_image(16, 16, 1);
    BlobClassifier c{BlobSettings{}};
    const SegmentMap one{16, 16, std::vector<int>(256, 0), 1};
    EXPECT_THROW(explain(img, one, c, 1, LimeConfig{}, 1), DegenerateSegmentation);
    const auto m = halves(16, 16);
    EXPECT_THROW(explain(img, m, c, 2, LimeConfig{}, 1), ValidationError);
    EXPECT_THROW(explain(img, m, c, 1, LimeConfig{.n_samples = 1}, 1), ValidationError);
    EXPECT_THROW(explain(Image(8, 16), m, c, 1, LimeConfig{}, 1), ValidationError);
}

TEST(Goals, WorkedExample)
{
    Explanation e;
    e.score = 0.9;
    e.weights = {0.7, 0.1};
    e.segmap = SegmentMap{96, 96, std::vector<int>(9216, 1), 2};
    std::fill(e.segmap.labels.begin(), e.segmap.labels.begin() + 300, 0);
    const auto g = goals(e);
    EXPECT_NEAR(g[0], 0.1, 1e-15);
    EXPECT_NEAR(g[1], 0.3, 1e-15);
    EXPECT_DOUBLE_EQ(g[2], 300.0 / 9216.0);
}

TEST(Goals, ClampsAndTies)
{
    Explanation e;
    e.score = 0.0;
    e.weights = {-0.2, -0.1, -0.1};
    e.segmap = SegmentMap{4, 1, {0, 1, 1, 2}, 3};
    EXPECT_EQ(most_relevant_segment(e), 2); // tie on -0.1: the smaller segment wins
    const auto g = goals(e);
    EXPECT_EQ(g[1], 1.0);
    EXPECT_EQ(g[0], 1.0);

    e.weights = {1.7, 0.0, 1.7};
    e.segmap = SegmentMap{4, 1, {0, 1, 2, 2}, 3};
    EXPECT_EQ(most_relevant_segment(e), 0); // equal size: the smaller label wins
    EXPECT_EQ(goals(e)[1], 0.0);
}

TEST(Goals, DegenerateIsPenalty)
{
    Explanation e;
    e.segmap = SegmentMap{3, 3, std::vector<int>(9, 0), 1};
    e.weights = {0.0};
    EXPECT_EQ(goals(e), kPenaltyGoals);
}
