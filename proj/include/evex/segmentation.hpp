#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "evex/error.hpp"
#include "evex/image.hpp"
#include "evex/imaging.hpp"

namespace evex {

/**
 * The three evolvable segmentation genes. Values are stored quantized
 * (scale to 1e-3, sigma to 1e-2, min_size integral), which makes equality
 * exact and lets a params triple serve as a memoization key.
 */
class SegmentationParams {
public:
    static constexpr double kScaleMin = 1.0;
    static constexpr double kScaleMax = 1000.0;
    static constexpr double kSigmaMin = 0.0;
    static constexpr double kSigmaMax = 5.0;
    static constexpr int kMinSizeMin = 15;
    static constexpr int kMinSizeMax = 500;

    struct Key {
        std::int64_t scale_milli;
        std::int64_t sigma_centi;
        std::int64_t min_size;
        friend auto operator<=>(const Key&, const Key&) = default;
    };

    SegmentationParams() : SegmentationParams(clamped(100.0, 0.5, 50)) {}

    /// Clamps each gene into range, then quantizes. Non-finite genes are rejected.
    static SegmentationParams clamped(double scale, double sigma, double min_size)
    {
        if (!std::isfinite(scale) || !std::isfinite(sigma) || !std::isfinite(min_size))
            throw ValidationError("segmentation parameters must be finite");
        // Quantize after clamping; the bounds are exactly representable at each resolution.
        const auto s = std::llround(std::clamp(scale, kScaleMin, kScaleMax) * 1000.0);
        const auto g = std::llround(std::clamp(sigma, kSigmaMin, kSigmaMax) * 100.0);
        const auto m = std::llround(std::clamp(min_size, double(kMinSizeMin), double(kMinSizeMax)));
        return SegmentationParams(Key{s, g, m});
    }

    /// Rejects any out-of-range gene instead of clamping.
    static SegmentationParams validated(double scale, double sigma, double min_size)
    {
        if (!(scale >= kScaleMin && scale <= kScaleMax))
            throw ValidationError("scale must be in [1, 1000], got " + std::to_string(scale));
        if (!(sigma >= kSigmaMin && sigma <= kSigmaMax))
            throw ValidationError("sigma must be in [0, 5], got " + std::to_string(sigma));
        if (!(min_size >= kMinSizeMin && min_size <= kMinSizeMax) || min_size != std::floor(min_size))
            throw ValidationError("min_size must be an integer in [15, 500], got " + std::to_string(min_size));
        return clamped(scale, sigma, min_size);
    }

    static SegmentationParams from_key(Key key)
    {
        return clamped(key.scale_milli / 1000.0, key.sigma_centi / 100.0, static_cast<double>(key.min_size));
    }

    double scale() const noexcept { return static_cast<double>(key_.scale_milli) / 1000.0; }
    double sigma() const noexcept { return static_cast<double>(key_.sigma_centi) / 100.0; }
    int min_size() const noexcept { return static_cast<int>(key_.min_size); }
    const Key& key() const noexcept { return key_; }

    friend bool operator==(const SegmentationParams& a, const SegmentationParams& b) { return a.key_ == b.key_; }
    friend auto operator<=>(const SegmentationParams& a, const SegmentationParams& b) { return a.key_ <=> b.key_; }

private:
    explicit SegmentationParams(Key key) : key_(key) {}

    Key key_;
};

namespace detail {

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n), size_(n, 1), internal_(n, 0.0)
    {
        std::iota(parent_.begin(), parent_.end(), std::uint32_t{0});
    }

    std::uint32_t find(std::uint32_t x)
    {
        std::uint32_t root = x;
        while (parent_[root] != root) root = parent_[root];
        while (parent_[x] != root) {
            const std::uint32_t next = parent_[x];
            parent_[x] = root;
            x = next;
        }
        return root;
    }

    /// Joins two roots; the larger component becomes the root (ties: smaller index).
    std::uint32_t join(std::uint32_t a, std::uint32_t b, double internal)
    {
        if (size_[a] < size_[b] || (size_[a] == size_[b] && b < a)) std::swap(a, b);
        parent_[b] = a;
        size_[a] += size_[b];
        internal_[a] = internal;
        return a;
    }

    std::size_t size(std::uint32_t root) const { return size_[root]; }
    double internal(std::uint32_t root) const { return internal_[root]; }

private:
    std::vector<std::uint32_t> parent_;
    std::vector<std::size_t> size_;
    std::vector<double> internal_;
};

struct Edge {
    double weight;
    std::uint32_t a;
    std::uint32_t b;
};

// 8-connected pixel graph; each undirected edge appears once with a < b.
inline std::vector<Edge> build_pixel_graph(const ChannelGrids& ch)
{
    const int w = ch[0].width();
    const int h = ch[0].height();
    std::vector<Edge> edges;
    edges.reserve(static_cast<std::size_t>(w) * h * 4);
    auto dist = [&](std::size_t p, std::size_t q) {
        const double dr = ch[0][p] - ch[0][q];
        const double dg = ch[1][p] - ch[1][q];
        const double db = ch[2][p] - ch[2][q];
        return std::sqrt(dr * dr + dg * dg + db * db);
    };
    auto add = [&](int x, int y, int nx, int ny) {
        const auto p = static_cast<std::uint32_t>(y * w + x);
        const auto q = static_cast<std::uint32_t>(ny * w + nx);
        edges.push_back({dist(p, q), p, q});
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (x + 1 < w) add(x, y, x + 1, y);
            if (y + 1 < h) add(x, y, x, y + 1);
            if (x + 1 < w && y + 1 < h) add(x, y, x + 1, y + 1);
            if (x > 0 && y + 1 < h) add(x, y, x - 1, y + 1);
        }
    }
    std::sort(edges.begin(), edges.end(), [](const Edge& l, const Edge& r) {
        return std::tie(l.weight, l.a, l.b) < std::tie(r.weight, r.a, r.b);
    });
    return edges;
}

inline SegmentMap relabel_dense(DisjointSets& sets, int width, int height)
{
    SegmentMap out;
    out.width = width;
    out.height = height;
    out.labels.resize(static_cast<std::size_t>(width) * height);
    std::vector<int> dense(out.labels.size(), -1);
    int next = 0;
    for (std::size_t p = 0; p < out.labels.size(); ++p) {
        const auto root = sets.find(static_cast<std::uint32_t>(p));
        if (dense[root] < 0) dense[root] = next++;
        out.labels[p] = dense[root];
    }
    out.segment_count = next;
    return out;
}

} // namespace detail

/// Segment counts before and after the minimum-size pass, for diagnostics.
struct SegmentationTrace {
    int merged_segments = 0;
    int final_segments = 0;
};

/**
 * Felzenszwalb-Huttenlocher graph segmentation on joint-RGB distances.
 *
 * Components Ci and Cj joined by an edge of weight w merge iff
 *   w <= min(Int(Ci) + scale/|Ci|, Int(Cj) + scale/|Cj|)
 * where Int(C) is the heaviest edge merged inside C. A second pass over the
 * sorted edges absorbs every component smaller than min_size. Labels are
 * dense, numbered in row-major order of first appearance.
 */
inline SegmentMap felzenszwalb(const Image& image, double scale, double sigma, int min_size,
                               SegmentationTrace* trace = nullptr)
{
    if (!(scale > 0.0)) throw ValidationError("felzenszwalb scale must be > 0");
    const auto channels = gaussian_blur(image, sigma);
    const auto edges = detail::build_pixel_graph(channels);
    detail::DisjointSets sets(image.size());

    int components = static_cast<int>(image.size());
    for (const auto& e : edges) {
        const auto ra = sets.find(e.a);
        const auto rb = sets.find(e.b);
        if (ra == rb) continue;
        const double ta = sets.internal(ra) + scale / static_cast<double>(sets.size(ra));
        const double tb = sets.internal(rb) + scale / static_cast<double>(sets.size(rb));
        if (e.weight <= std::min(ta, tb)) {
            // Edges arrive in ascending order, so e.weight is the new maximum.
            sets.join(ra, rb, e.weight);
            --components;
        }
    }
    const int before_postprocess = components;

    const auto threshold = static_cast<std::size_t>(std::max(min_size, 0));
    for (const auto& e : edges) {
        const auto ra = sets.find(e.a);
        const auto rb = sets.find(e.b);
        if (ra == rb) continue;
        if (sets.size(ra) < threshold || sets.size(rb) < threshold) {
            sets.join(ra, rb, std::max({sets.internal(ra), sets.internal(rb), e.weight}));
            --components;
        }
    }

    auto segmap = detail::relabel_dense(sets, image.width(), image.height());
    if (trace) *trace = {before_postprocess, segmap.segment_count};
    return segmap;
}

inline SegmentMap felzenszwalb(const Image& image, const SegmentationParams& params,
                               SegmentationTrace* trace = nullptr)
{
    return felzenszwalb(image, params.scale(), params.sigma(), params.min_size(), trace);
}

inline std::vector<std::size_t> segment_sizes(const SegmentMap& segmap)
{
    std::vector<std::size_t> sizes(static_cast<std::size_t>(segmap.segment_count), 0);
    for (int l : segmap.labels) ++sizes[static_cast<std::size_t>(l)];
    return sizes;
}

inline double relative_area(const SegmentMap& segmap, int label)
{
    if (label < 0 || label >= segmap.segment_count)
        throw ValidationError("segment label " + std::to_string(label) + " out of range");
    const auto n = std::count(segmap.labels.begin(), segmap.labels.end(), label);
    return static_cast<double>(n) / static_cast<double>(segmap.labels.size());
}

} // namespace evex
