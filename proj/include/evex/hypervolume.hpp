#pragma once

#include <algorithm>
#include <array>
#include <iterator>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "evex/error.hpp"

namespace evex {

using Point3 = std::array<double, 3>;

/**
 * Lebesgue measure of the union of boxes [p, reference] (minimization).
 *
 * Dimension sweep in O(n log n): points are visited in ascending third
 * coordinate while a 2-D staircase of the (x, y) projections is maintained in
 * a map keyed by x (y strictly decreasing along the map). Each insertion
 * updates the dominated area incrementally from the neighbours it replaces.
 */
inline double hypervolume3(std::span<const Point3> points, const Point3& reference = {1.0, 1.0, 1.0})
{
    for (const auto& p : points)
        for (std::size_t d = 0; d < 3; ++d)
            if (!(p[d] >= 0.0 && p[d] <= reference[d]))
                throw ValidationError("hypervolume point outside [0, reference] box (coordinate " + std::to_string(d) + ")");
    if (points.empty()) return 0.0;

    std::vector<Point3> sorted(points.begin(), points.end());
    std::sort(sorted.begin(), sorted.end(), [](const Point3& a, const Point3& b) { return a[2] < b[2]; });

    const double rx = reference[0];
    const double ry = reference[1];
    std::map<double, double> staircase; // x -> y
    double area = 0.0;
    double volume = 0.0;
    double last_z = sorted.front()[2];

    for (const auto& p : sorted) {
        volume += area * (p[2] - last_z);
        last_z = p[2];

        const double x = p[0];
        const double y = p[1];
        auto it = staircase.upper_bound(x);
        if (it != staircase.begin() && std::prev(it)->second <= y) continue; // weakly dominated in 2-D

        // Remove points with x' >= x and y' >= y; they are covered by p.
        it = staircase.lower_bound(x);
        const double left_height = it == staircase.begin() ? ry : std::prev(it)->second;
        double cursor_x = x;
        double cursor_h = left_height;
        while (it != staircase.end() && it->second >= y) {
            area += (it->first - cursor_x) * (cursor_h - y);
            cursor_x = it->first;
            cursor_h = it->second;
            it = staircase.erase(it);
        }
        const double right_x = it == staircase.end() ? rx : it->first;
        area += (right_x - cursor_x) * (cursor_h - y);
        staircase.emplace_hint(it, x, y);
    }
    volume += area * (reference[2] - last_z);
    return volume;
}

inline double hypervolume3(const std::vector<Point3>& points, const Point3& reference = {1.0, 1.0, 1.0})
{
    return hypervolume3(std::span<const Point3>(points), reference);
}

} // namespace evex
