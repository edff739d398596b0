#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "evex/image.hpp"
#include "evex/random.hpp"

namespace evex::fixtures {

struct BlobScene {
    Image image;
    /// Ground-truth blob pixels.
    std::vector<bool> mask;
};

inline std::uint8_t jitter(int base, int amplitude, SplitMix64& rng)
{
    return static_cast<std::uint8_t>(std::clamp(base + static_cast<int>(rng.uniform_int(-amplitude, amplitude)), 0, 255));
}

/**
 * Textured pinkish background with a noisy green disc at the centre. Every
 * disc pixel satisfies the blob classifier's colour predicate and no
 * background pixel does.
 */
inline BlobScene toy_blob(int width = 64, int height = 64, double radius = 14.0, std::uint64_t seed = 7)
{
    SplitMix64 rng(seed);
    BlobScene scene{Image(width, height), std::vector<bool>(static_cast<std::size_t>(width) * height, false)};
    const double cx = (width - 1) / 2.0;
    const double cy = (height - 1) / 2.0;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const bool inside = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= radius * radius;
            // Low-frequency stripes give the background some structure.
            const int stripe = ((x / 6 + y / 9) % 3) * 14;
            Rgb p;
            if (inside)
                p = {jitter(60, 18, rng), jitter(175, 18, rng), jitter(70, 18, rng)};
            else
                p = {jitter(185 - stripe, 22, rng), jitter(105 + stripe / 2, 22, rng), jitter(170 - stripe, 22, rng)};
            scene.image.at(x, y) = p;
            scene.mask[static_cast<std::size_t>(y) * width + x] = inside;
        }
    }
    return scene;
}

inline Image uniform_image(int width, int height, Rgb color) { return Image(width, height, color); }

/// Random-colour image with independent pixels.
inline Image noise_image(int width, int height, std::uint64_t seed)
{
    SplitMix64 rng(seed);
    Image img(width, height);
    for (std::size_t i = 0; i < img.size(); ++i)
        img[i] = {static_cast<std::uint8_t>(rng() >> 56), static_cast<std::uint8_t>(rng() >> 56),
                  static_cast<std::uint8_t>(rng() >> 56)};
    return img;
}

/// Left half one colour, right half another.
inline Image split_image(int width, int height, int split_column, Rgb left, Rgb right)
{
    Image img(width, height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) img.at(x, y) = x < split_column ? left : right;
    return img;
}

} // namespace evex::fixtures
