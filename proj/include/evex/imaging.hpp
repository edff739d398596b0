#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "evex/image.hpp"

namespace evex {

using ChannelGrids = std::array<FloatGrid, 3>;

enum class HeatmapScale { Fixed, Auto };

namespace detail {

/// Normalized sampled Gaussian, radius ceil(4 sigma).
inline std::vector<double> gaussian_kernel(double sigma)
{
    const int radius = static_cast<int>(std::ceil(4.0 * sigma));
    std::vector<double> kernel(2 * static_cast<std::size_t>(radius) + 1);
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = v;
        total += v;
    }
    for (auto& v : kernel) v /= total;
    return kernel;
}

// Edge-clamped 1-D convolution along rows (horizontal) or columns.
inline FloatGrid convolve_axis(const FloatGrid& in, std::span<const double> kernel, bool horizontal)
{
    const int radius = static_cast<int>(kernel.size() / 2);
    const int w = in.width();
    const int h = in.height();
    FloatGrid out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int t = -radius; t <= radius; ++t) {
                const int sx = horizontal ? std::clamp(x + t, 0, w - 1) : x;
                const int sy = horizontal ? y : std::clamp(y + t, 0, h - 1);
                acc += kernel[static_cast<std::size_t>(t + radius)] * in.at(sx, sy);
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

inline std::uint8_t quantize_channel(double v)
{
    return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

inline Rgb blend_from_white(Rgb target, double s)
{
    auto mix = [s](std::uint8_t t) { return quantize_channel(255.0 * (1.0 - s) + t * s); };
    return {mix(target.r), mix(target.g), mix(target.b)};
}

} // namespace detail

/// Splits an image into per-channel float grids without blurring.
inline ChannelGrids to_channels(const Image& image)
{
    ChannelGrids ch{FloatGrid(image.width(), image.height()), FloatGrid(image.width(), image.height()),
                    FloatGrid(image.width(), image.height())};
    for (std::size_t i = 0; i < image.size(); ++i) {
        ch[0][i] = image[i].r;
        ch[1][i] = image[i].g;
        ch[2][i] = image[i].b;
    }
    return ch;
}

/**
 * Separable Gaussian blur of each channel. The kernel is the sampled,
 * normalized Gaussian truncated at radius ceil(4 sigma); borders replicate the
 * edge pixel. sigma == 0 returns the channels unchanged.
 */
inline ChannelGrids gaussian_blur(const Image& image, double sigma)
{
    if (!(sigma >= 0.0)) throw ValidationError("blur sigma must be >= 0");
    ChannelGrids ch = to_channels(image);
    if (sigma == 0.0) return ch;
    const auto kernel = detail::gaussian_kernel(sigma);
    for (auto& grid : ch) grid = detail::convolve_axis(detail::convolve_axis(grid, kernel, true), kernel, false);
    return ch;
}

/// Diverging white-anchored colormap: positive toward blue, negative toward red.
inline Image render_heatmap(const FloatGrid& grid, HeatmapScale mode)
{
    double m = 1.0;
    if (mode == HeatmapScale::Auto) {
        double peak = 0.0;
        for (double v : grid.values()) peak = std::max(peak, std::abs(v));
        if (peak > 0.0) m = peak;
    }
    Image out(grid.width(), grid.height(), kWhite);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double v = grid[i];
        const double s = std::clamp(std::abs(v) / m, 0.0, 1.0);
        if (v > 0.0)
            out[i] = detail::blend_from_white({0, 0, 255}, s);
        else if (v < 0.0)
            out[i] = detail::blend_from_white({255, 0, 0}, s);
    }
    return out;
}

inline constexpr Rgb kExcludedSentinel{0, 255, 0};

/// White (0) to black (>= cap). Pixels flagged in `excluded` render pure green.
inline Image render_grayscale(const FloatGrid& grid, double cap, const std::vector<bool>& excluded = {})
{
    if (!(cap > 0.0)) throw ValidationError("grayscale cap must be > 0");
    if (!excluded.empty() && excluded.size() != grid.size())
        throw ValidationError("exclusion mask size does not match grid");
    Image out(grid.width(), grid.height(), kWhite);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!excluded.empty() && excluded[i]) {
            out[i] = kExcludedSentinel;
            continue;
        }
        const double s = std::clamp(grid[i] / cap, 0.0, 1.0);
        const auto level = detail::quantize_channel(255.0 * (1.0 - s));
        out[i] = {level, level, level};
    }
    return out;
}

inline constexpr Rgb kBoundaryColor{255, 255, 0};

/// Recolors every pixel with a 4-neighbour carrying a different label.
inline Image overlay_boundaries(const Image& image, const SegmentMap& segmap)
{
    if (image.width() != segmap.width || image.height() != segmap.height)
        throw ValidationError("segment map dimensions do not match image");
    Image out = image;
    const int w = image.width();
    const int h = image.height();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int l = segmap.label(x, y);
            const bool edge = (x > 0 && segmap.label(x - 1, y) != l) || (x + 1 < w && segmap.label(x + 1, y) != l) ||
                              (y > 0 && segmap.label(x, y - 1) != l) || (y + 1 < h && segmap.label(x, y + 1) != l);
            if (edge) out.at(x, y) = kBoundaryColor;
        }
    }
    return out;
}

} // namespace evex
