#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "evex/classifier.hpp"
#include "evex/error.hpp"
#include "evex/image.hpp"
#include "evex/random.hpp"
#include "evex/ridge.hpp"
#include "evex/segmentation.hpp"

namespace evex {

struct LimeConfig {
    int n_samples = 200;
    double kernel_width = 0.25;
    double ridge_alpha = 1.0;
    Rgb mask_fill = kBlack;

    void validate() const
    {
        if (n_samples < 2) throw ValidationError("n_samples must be >= 2");
        if (!(kernel_width > 0.0) || !std::isfinite(kernel_width)) throw ValidationError("kernel_width must be > 0");
        if (!(ridge_alpha >= 0.0) || !std::isfinite(ridge_alpha)) throw ValidationError("ridge_alpha must be >= 0");
    }

    friend bool operator==(const LimeConfig&, const LimeConfig&) = default;
};

/// n_samples rows of k on/off bits; row 0 is the unperturbed image.
class PerturbationMatrix {
public:
    PerturbationMatrix(int rows, int cols) : rows_(rows), cols_(cols), bits_(static_cast<std::size_t>(rows) * cols, 0) {}

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }

    std::span<std::uint8_t> row(int r) { return {bits_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }
    std::span<const std::uint8_t> row(int r) const
    {
        return {bits_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)};
    }

    friend bool operator==(const PerturbationMatrix&, const PerturbationMatrix&) = default;

private:
    int rows_;
    int cols_;
    std::vector<std::uint8_t> bits_;
};

/**
 * Row 0 is all ones. Bit c of row r >= 1 is the top bit of draw
 * (r - 1) * k + c of the SplitMix64 stream `seed`, so the matrix depends only
 * on (k, n_samples, seed).
 */
inline PerturbationMatrix generate_masks(int k, const LimeConfig& cfg, std::uint64_t seed)
{
    if (k < 1) throw ValidationError("mask generation needs at least one segment");
    cfg.validate();
    PerturbationMatrix m(cfg.n_samples, k);
    std::ranges::fill(m.row(0), std::uint8_t{1});
    std::uint64_t index = 0;
    for (int r = 1; r < cfg.n_samples; ++r)
        for (auto& bit : m.row(r)) bit = static_cast<std::uint8_t>(counter_draw(seed, index++) >> 63);
    return m;
}

inline Image apply_mask(const Image& image, const SegmentMap& segmap, std::span<const std::uint8_t> mask,
                        Rgb fill = kBlack)
{
    if (image.width() != segmap.width || image.height() != segmap.height)
        throw ValidationError("segment map dimensions do not match image");
    if (mask.size() != static_cast<std::size_t>(segmap.segment_count))
        throw ValidationError("mask length " + std::to_string(mask.size()) + " does not match segment count " +
                              std::to_string(segmap.segment_count));
    Image out = image;
    for (std::size_t p = 0; p < out.size(); ++p)
        if (!mask[static_cast<std::size_t>(segmap.labels[p])]) out[p] = fill;
    return out;
}

/// Cosine distance to the all-ones mask, d = 1 - sqrt(ones/k), through sqrt(exp(-d^2 / width^2)).
inline double kernel_weight(std::span<const std::uint8_t> mask, double kernel_width)
{
    if (mask.empty()) throw ValidationError("kernel_weight needs a non-empty mask");
    const auto ones = std::count_if(mask.begin(), mask.end(), [](std::uint8_t b) { return b != 0; });
    const double d = ones == 0 ? 1.0 : 1.0 - std::sqrt(static_cast<double>(ones) / static_cast<double>(mask.size()));
    return std::sqrt(std::exp(-(d * d) / (kernel_width * kernel_width)));
}

struct Explanation {
    std::vector<double> weights;
    double intercept = 0.0;
    double r2 = 0.0;
    /// r2 clamped to [0, 1].
    double score = 0.0;
    SegmentMap segmap;
    FloatGrid pixel_grid{1, 1};
};

/// Lifts per-segment values onto pixels.
inline FloatGrid lift_to_pixels(const SegmentMap& segmap, std::span<const double> per_segment)
{
    FloatGrid grid(segmap.width, segmap.height);
    for (std::size_t p = 0; p < segmap.labels.size(); ++p)
        grid[p] = per_segment[static_cast<std::size_t>(segmap.labels[p])];
    return grid;
}

/**
 * Perturbation explanation of `target_class` for one segmentation:
 * masks -> masked images -> classifier -> kernel-weighted ridge fit.
 * Deterministic in (image, segmap, classifier, target_class, cfg, seed).
 */
inline Explanation explain(const Image& image, const SegmentMap& segmap, Classifier& classifier, int target_class,
                           const LimeConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    if (target_class < 0 || target_class >= classifier.class_count())
        throw ValidationError("target class " + std::to_string(target_class) + " outside [0, " +
                              std::to_string(classifier.class_count()) + ")");
    if (image.width() != segmap.width || image.height() != segmap.height)
        throw ValidationError("segment map dimensions do not match image");
    if (segmap.segment_count < 2)
        throw DegenerateSegmentation("segmentation has " + std::to_string(segmap.segment_count) + " segment(s)");

    const int k = segmap.segment_count;
    const auto masks = generate_masks(k, cfg, seed);

    std::vector<Image> perturbed;
    perturbed.reserve(static_cast<std::size_t>(cfg.n_samples));
    for (int r = 0; r < masks.rows(); ++r) perturbed.push_back(apply_mask(image, segmap, masks.row(r), cfg.mask_fill));
    const auto predictions = predict_batch(classifier, perturbed);

    Eigen::MatrixXd x(masks.rows(), k);
    std::vector<double> y(static_cast<std::size_t>(masks.rows()));
    std::vector<double> w(y.size());
    for (int r = 0; r < masks.rows(); ++r) {
        const auto row = masks.row(r);
        for (int c = 0; c < k; ++c) x(r, c) = row[static_cast<std::size_t>(c)];
        y[static_cast<std::size_t>(r)] = predictions[static_cast<std::size_t>(r)].probabilities[static_cast<std::size_t>(target_class)];
        w[static_cast<std::size_t>(r)] = kernel_weight(row, cfg.kernel_width);
    }
    auto fit = fit_weighted_ridge(x, y, w, cfg.ridge_alpha);

    Explanation e;
    e.weights = std::move(fit.coefficients);
    e.intercept = fit.intercept;
    e.r2 = fit.r2;
    e.score = std::clamp(fit.r2, 0.0, 1.0);
    e.pixel_grid = lift_to_pixels(segmap, e.weights);
    e.segmap = segmap;
    return e;
}

/// Minimization objectives (1 - E_s, 1 - clamp(L_w, 0, 1), A_r).
using GoalVector = std::array<double, 3>;

inline constexpr GoalVector kPenaltyGoals{1.0, 1.0, 1.0};

/// Label of the largest weight; ties go to the smaller segment, then the smaller label.
inline int most_relevant_segment(const Explanation& e)
{
    if (e.weights.empty()) throw ValidationError("explanation has no weights");
    const auto sizes = segment_sizes(e.segmap);
    int best = 0;
    for (int l = 1; l < static_cast<int>(e.weights.size()); ++l) {
        const auto i = static_cast<std::size_t>(l);
        const auto b = static_cast<std::size_t>(best);
        if (e.weights[i] > e.weights[b] || (e.weights[i] == e.weights[b] && sizes[i] < sizes[b])) best = l;
    }
    return best;
}

inline GoalVector goals(const Explanation& e)
{
    if (e.segmap.segment_count < 2) return kPenaltyGoals;
    const int top = most_relevant_segment(e);
    const double largest = e.weights[static_cast<std::size_t>(top)];
    return {1.0 - std::clamp(e.score, 0.0, 1.0), 1.0 - std::clamp(largest, 0.0, 1.0), relative_area(e.segmap, top)};
}

} // namespace evex
