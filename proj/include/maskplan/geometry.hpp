#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace maskplan {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double cross(Vec2 o) const { return x * o.y - y * o.x; }
    double norm() const { return std::hypot(x, y); }
    double squared_norm() const { return x * x + y * y; }
};

inline Vec2 rotate(Vec2 p, double angle) {
    double c = std::cos(angle), s = std::sin(angle);
    return {c * p.x - s * p.y, s * p.x + c * p.y};
}

struct Pose {
    double x = 0.0;
    double y = 0.0;
    double yaw = 0.0;
    Vec2 position() const { return {x, y}; }
};

// Axis-aligned in its own frame; oriented in the world by `heading`.
struct OrientedRect {
    Vec2 center;
    double heading = 0.0;
    double length = 0.0;  // extent along heading
    double width = 0.0;   // extent across heading

    std::array<Vec2, 4> corners() const;
};

// Separating-axis overlap test for two oriented rectangles. Touching edges
// count as overlap.
bool rects_overlap(const OrientedRect& a, const OrientedRect& b);

// Cumulative arc length per vertex; arcs[0] == 0.
std::vector<double> arc_lengths(std::span<const Vec2> pts);

// Point at arc length s along the polyline. s < 0 clamps to the first vertex;
// s beyond the total extrapolates along the last segment.
Vec2 point_at_arc(std::span<const Vec2> pts, std::span<const double> arcs, double s);

// Arc length of the closest point on the polyline to p (clamped to [0, total]).
double project_arc(std::span<const Vec2> pts, std::span<const double> arcs, Vec2 p);

// Distance from p to the polyline.
double distance_to_polyline(std::span<const Vec2> pts, Vec2 p);

}  // namespace maskplan
