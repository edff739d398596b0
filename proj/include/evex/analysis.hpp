#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "evex/error.hpp"
#include "evex/image.hpp"

namespace evex {

/// Averaged explanations of the same image from S >= 2 seeds.
struct HeatMapStack {
    std::vector<FloatGrid> grids;
    std::vector<std::string> labels;

    void validate() const
    {
        if (grids.size() < 2) throw ValidationError("a heat-map stack needs at least 2 grids");
        for (const auto& g : grids)
            if (!g.same_shape(grids.front())) throw ValidationError("heat-map stack grids differ in dimensions");
    }
};

inline FloatGrid pixel_mean(const HeatMapStack& stack)
{
    stack.validate();
    const auto& first = stack.grids.front();
    // Accumulating offsets from the first grid keeps identical stacks exact.
    FloatGrid offset(first.width(), first.height());
    for (const auto& g : stack.grids)
        for (std::size_t i = 0; i < offset.size(); ++i) offset[i] += g[i] - first[i];
    FloatGrid mean = first;
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += offset[i] / static_cast<double>(stack.grids.size());
    return mean;
}

/// Population standard deviation (divides by S) per pixel.
inline FloatGrid pixel_sd(const HeatMapStack& stack)
{
    const auto mean = pixel_mean(stack);
    FloatGrid sd(mean.width(), mean.height());
    for (const auto& g : stack.grids)
        for (std::size_t i = 0; i < sd.size(); ++i) {
            const double d = g[i] - mean[i];
            sd[i] += d * d;
        }
    for (auto& v : sd.values()) v = std::sqrt(v / static_cast<double>(stack.grids.size()));
    return sd;
}

struct RSDReport {
    FloatGrid sd{1, 1};
    FloatGrid mean{1, 1};
    /// SD / |mean| on included pixels, 0 on excluded ones.
    FloatGrid rsd{1, 1};
    std::vector<bool> excluded;
    double threshold = 0.0;
    double max_rsd = 0.0;
    double excluded_fraction = 0.0;
};

/// Pixels with |mean| below `threshold` are excluded; the rest get SD / |mean|.
inline RSDReport pixel_rsd(const HeatMapStack& stack, double threshold)
{
    if (!(threshold >= 0.0)) throw ValidationError("RSD threshold must be >= 0");
    RSDReport r;
    r.sd = pixel_sd(stack);
    r.mean = pixel_mean(stack);
    r.rsd = FloatGrid(r.mean.width(), r.mean.height());
    r.threshold = threshold;
    r.excluded.assign(r.mean.size(), false);
    std::size_t excluded = 0;
    for (std::size_t i = 0; i < r.mean.size(); ++i) {
        const double m = std::abs(r.mean[i]);
        // A zero mean has no defined RSD even at threshold 0.
        if (m < threshold || m == 0.0) {
            r.excluded[i] = true;
            ++excluded;
            continue;
        }
        r.rsd[i] = r.sd[i] / m;
        r.max_rsd = std::max(r.max_rsd, r.rsd[i]);
    }
    r.excluded_fraction = static_cast<double>(excluded) / static_cast<double>(r.mean.size());
    return r;
}

struct SweepPoint {
    double threshold = 0.0;
    double max_rsd = 0.0;
    double excluded_fraction = 0.0;
};

inline std::vector<SweepPoint> threshold_sweep(const HeatMapStack& stack, std::span<const double> thresholds)
{
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        if (!(thresholds[i] >= 0.0)) throw ValidationError("sweep thresholds must be >= 0");
        if (i > 0 && thresholds[i] < thresholds[i - 1]) throw ValidationError("sweep thresholds must be ascending");
    }
    std::vector<SweepPoint> out;
    for (double t : thresholds) {
        const auto r = pixel_rsd(stack, t);
        out.push_back({t, r.max_rsd, r.excluded_fraction});
    }
    return out;
}

} // namespace evex
