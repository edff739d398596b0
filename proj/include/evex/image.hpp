#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "evex/error.hpp"

namespace evex {

struct Rgb {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kWhite{255, 255, 255};
inline constexpr Rgb kBlack{0, 0, 0};

namespace detail {

inline void check_dimensions(int width, int height)
{
    if (width < 1 || height < 1)
        throw ValidationError("raster dimensions must be positive, got " + std::to_string(width) + "x" +
                              std::to_string(height));
}

} // namespace detail

/// Row-major 8-bit RGB raster.
class Image {
public:
    Image(int width, int height, Rgb fill = kBlack)
        : width_(width), height_(height)
    {
        detail::check_dimensions(width, height);
        pixels_.assign(static_cast<std::size_t>(width) * height, fill);
    }

    Image(int width, int height, std::vector<Rgb> pixels)
        : width_(width), height_(height), pixels_(std::move(pixels))
    {
        detail::check_dimensions(width, height);
        if (pixels_.size() != static_cast<std::size_t>(width) * height)
            throw ValidationError("pixel count does not match image dimensions");
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return pixels_.size(); }

    Rgb& at(int x, int y) { return pixels_[index(x, y)]; }
    const Rgb& at(int x, int y) const { return pixels_[index(x, y)]; }
    Rgb& operator[](std::size_t i) { return pixels_[i]; }
    const Rgb& operator[](std::size_t i) const { return pixels_[i]; }

    const std::vector<Rgb>& pixels() const noexcept { return pixels_; }

    bool same_shape(const Image& other) const noexcept
    {
        return width_ == other.width_ && height_ == other.height_;
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t index(int x, int y) const noexcept { return static_cast<std::size_t>(y) * width_ + x; }

    int width_;
    int height_;
    std::vector<Rgb> pixels_;
};

/// Row-major grid of finite scalars, e.g. per-pixel explanation weights.
class FloatGrid {
public:
    FloatGrid(int width, int height, double fill = 0.0)
        : width_(width), height_(height)
    {
        detail::check_dimensions(width, height);
        values_.assign(static_cast<std::size_t>(width) * height, fill);
    }

    FloatGrid(int width, int height, std::vector<double> values)
        : width_(width), height_(height), values_(std::move(values))
    {
        detail::check_dimensions(width, height);
        if (values_.size() != static_cast<std::size_t>(width) * height)
            throw ValidationError("value count does not match grid dimensions");
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return values_.size(); }

    double& at(int x, int y) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
    double at(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    std::vector<double>& values() noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }

    template <typename Raster>
    bool same_shape(const Raster& other) const noexcept
    {
        return width_ == other.width() && height_ == other.height();
    }

    friend bool operator==(const FloatGrid&, const FloatGrid&) = default;

private:
    int width_;
    int height_;
    std::vector<double> values_;
};

/// Dense per-pixel segment labels in [0, segment_count).
struct SegmentMap {
    int width = 0;
    int height = 0;
    std::vector<int> labels;
    int segment_count = 0;

    std::size_t size() const noexcept { return labels.size(); }
    int label(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }

    friend bool operator==(const SegmentMap&, const SegmentMap&) = default;
};

} // namespace evex
