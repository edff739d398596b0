#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace evex {

/// Minimization: a <= b everywhere and a < b somewhere.
template <std::size_t N>
constexpr bool dominates(const std::array<double, N>& a, const std::array<double, N>& b) noexcept
{
    bool strictly = false;
    for (std::size_t i = 0; i < N; ++i) {
        if (a[i] > b[i]) return false;
        if (a[i] < b[i]) strictly = true;
    }
    return strictly;
}

using Fronts = std::vector<std::vector<std::size_t>>;

/// Fast non-dominated sort (Deb et al.). Indices within a front are ascending.
template <std::size_t N>
Fronts non_dominated_sort(std::span<const std::array<double, N>> points)
{
    const std::size_t n = points.size();
    std::vector<std::vector<std::size_t>> dominated_by(n);
    std::vector<std::size_t> domination_count(n, 0);
    Fronts fronts(1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (dominates(points[i], points[j])) {
                dominated_by[i].push_back(j);
                ++domination_count[j];
            } else if (dominates(points[j], points[i])) {
                dominated_by[j].push_back(i);
                ++domination_count[i];
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (domination_count[i] == 0) fronts[0].push_back(i);
    if (fronts[0].empty()) return {};

    for (std::size_t f = 0; !fronts[f].empty(); ++f) {
        std::vector<std::size_t> next;
        for (std::size_t i : fronts[f])
            for (std::size_t j : dominated_by[i])
                if (--domination_count[j] == 0) next.push_back(j);
        std::sort(next.begin(), next.end());
        fronts.push_back(std::move(next));
    }
    fronts.pop_back();
    return fronts;
}

/// Per-front rank of each point.
inline std::vector<std::size_t> front_ranks(const Fronts& fronts, std::size_t n)
{
    std::vector<std::size_t> rank(n, 0);
    for (std::size_t f = 0; f < fronts.size(); ++f)
        for (std::size_t i : fronts[f]) rank[i] = f;
    return rank;
}

/**
 * NSGA-II crowding distance over one front. Boundary members of each
 * objective get +inf; interior members add the normalized gap between their
 * neighbours. Objectives with zero range contribute nothing.
 */
template <std::size_t N>
std::vector<double> crowding_distance(std::span<const std::array<double, N>> front)
{
    constexpr double inf = std::numeric_limits<double>::infinity();
    const std::size_t n = front.size();
    std::vector<double> distance(n, 0.0);
    if (n <= 2) {
        std::fill(distance.begin(), distance.end(), inf);
        return distance;
    }
    std::vector<std::size_t> order(n);
    for (std::size_t m = 0; m < N; ++m) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return front[a][m] < front[b][m]; });
        const double lo = front[order.front()][m];
        const double hi = front[order.back()][m];
        const double range = hi - lo;
        if (!(range > 0.0)) continue;
        distance[order.front()] = inf;
        distance[order.back()] = inf;
        for (std::size_t i = 1; i + 1 < n; ++i)
            distance[order[i]] += (front[order[i + 1]][m] - front[order[i - 1]][m]) / range;
    }
    return distance;
}

} // namespace evex
