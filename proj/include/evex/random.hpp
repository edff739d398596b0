#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace evex {

// All randomness in the library comes from SplitMix64 so that runs are
// bit-reproducible across standard libraries. The std:: distributions are
// implementation-defined and are deliberately not used.
//
//   mix(z):  z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//            z ^= z >> 27; z *= 0x94D049BB133111EB;
//            z ^= z >> 31
//   draw i of stream `seed` (i = 0, 1, ...):  mix(seed + (i + 1) * 0x9E3779B97F4A7C15)

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Random access into the SplitMix64 stream of `seed`.
constexpr std::uint64_t counter_draw(std::uint64_t seed, std::uint64_t index) noexcept
{
    return splitmix64_mix(seed + (index + 1) * kGoldenGamma);
}

/// Sequential SplitMix64; satisfies UniformRandomBitGenerator.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept
    {
        state_ += kGoldenGamma;
        return splitmix64_mix(state_);
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    double uniform01() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [lo, hi], unbiased by rejection.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept
    {
        const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
        if (range == 0) return static_cast<std::int64_t>((*this)());
        const std::uint64_t threshold = (0 - range) % range;
        std::uint64_t x = (*this)();
        while (x < threshold) x = (*this)();
        return lo + static_cast<std::int64_t>(x % range);
    }

    /// Box-Muller, one variate per call (two draws consumed).
    double normal(double mean, double stddev) noexcept
    {
        const double u1 = 1.0 - uniform01();
        const double u2 = uniform01();
        return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    bool bernoulli(double p) noexcept { return uniform01() < p; }

    std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
};

} // namespace evex
