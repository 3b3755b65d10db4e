#include "maskplan/geometry.hpp"

#include <algorithm>
#include <limits>

namespace maskplan {

std::array<Vec2, 4> OrientedRect::corners() const {
    double hl = 0.5 * length, hw = 0.5 * width;
    std::array<Vec2, 4> local = {Vec2{hl, hw}, Vec2{hl, -hw}, Vec2{-hl, -hw}, Vec2{-hl, hw}};
    std::array<Vec2, 4> out;
    for (int i = 0; i < 4; ++i) out[i] = center + rotate(local[i], heading);
    return out;
}

namespace {

// Projection interval of corners onto a unit axis.
std::pair<double, double> project(const std::array<Vec2, 4>& pts, Vec2 axis) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& p : pts) {
        double d = p.dot(axis);
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    return {lo, hi};
}

}  // namespace

bool rects_overlap(const OrientedRect& a, const OrientedRect& b) {
    auto ca = a.corners();
    auto cb = b.corners();
    const std::array<Vec2, 4> axes = {
        rotate({1, 0}, a.heading), rotate({0, 1}, a.heading),
        rotate({1, 0}, b.heading), rotate({0, 1}, b.heading)};
    for (const auto& ax : axes) {
        auto [alo, ahi] = project(ca, ax);
        auto [blo, bhi] = project(cb, ax);
        if (ahi < blo || bhi < alo) return false;
    }
    return true;
}

std::vector<double> arc_lengths(std::span<const Vec2> pts) {
    std::vector<double> arcs(pts.size(), 0.0);
    for (size_t i = 1; i < pts.size(); ++i)
        arcs[i] = arcs[i - 1] + (pts[i] - pts[i - 1]).norm();
    return arcs;
}

Vec2 point_at_arc(std::span<const Vec2> pts, std::span<const double> arcs, double s) {
    const size_t n = pts.size();
    if (n == 1) return pts[0];
    if (s <= 0.0) return pts[0];
    double total = arcs[n - 1];
    if (s >= total) {
        // Extrapolate along the last non-degenerate segment.
        size_t j = n - 1;
        while (j > 0 && arcs[j] == arcs[j - 1]) --j;
        if (j == 0) return pts[n - 1];
        Vec2 dir = pts[j] - pts[j - 1];
        double len = dir.norm();
        return pts[n - 1] + dir * ((s - total) / len);
    }
    // Binary search for the containing segment.
    size_t hi = std::upper_bound(arcs.begin(), arcs.end(), s) - arcs.begin();
    size_t lo = hi - 1;
    double seg = arcs[hi] - arcs[lo];
    if (seg <= 0.0) return pts[lo];
    double t = (s - arcs[lo]) / seg;
    return pts[lo] + (pts[hi] - pts[lo]) * t;
}

double project_arc(std::span<const Vec2> pts, std::span<const double> arcs, Vec2 p) {
    double best_d2 = std::numeric_limits<double>::infinity();
    double best_s = 0.0;
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
        Vec2 a = pts[i], b = pts[i + 1];
        Vec2 ab = b - a;
        double len2 = ab.squared_norm();
        double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
        Vec2 q = a + ab * t;
        double d2 = (p - q).squared_norm();
        if (d2 < best_d2) {
            best_d2 = d2;
            best_s = arcs[i] + std::sqrt(len2) * t;
        }
    }
    if (pts.size() == 1) best_s = 0.0;
    return best_s;
}

double distance_to_polyline(std::span<const Vec2> pts, Vec2 p) {
    if (pts.size() == 1) return (p - pts[0]).norm();
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
        Vec2 a = pts[i], b = pts[i + 1];
        Vec2 ab = b - a;
        double len2 = ab.squared_norm();
        double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
        best = std::min(best, (p - (a + ab * t)).norm());
    }
    return best;
}

}  // namespace maskplan
