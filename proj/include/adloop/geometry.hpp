#ifndef ADLOOP_GEOMETRY_HPP
#define ADLOOP_GEOMETRY_HPP

#include <cmath>
#include <cstddef>
#include <vector>

namespace adloop::geom {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double cross(Vec2 o) const { return x * o.y - y * o.x; }
    double norm() const { return std::hypot(x, y); }
};

inline Vec2 from_heading(double heading) { return {std::cos(heading), std::sin(heading)}; }

inline Vec2 rotate(Vec2 v, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

/// Axis-aligned-in-body oriented rectangle: center, heading, full extents.
struct Obb {
    Vec2 center;
    double heading = 0.0;
    double length = 1.0;  // extent along heading
    double width = 1.0;   // extent across heading
};

/// Separating-axis overlap test for two oriented rectangles.
bool obb_overlap(const Obb& a, const Obb& b);

/// True if p lies inside (or on) the rectangle.
bool point_in_obb(Vec2 p, const Obb& r);

/// Closest-point projection onto a polyline.
struct PolylineProjection {
    std::size_t segment = 0;  // index of the segment containing the projection
    double t = 0.0;           // parametric position within that segment, [0,1]
    double arc_length = 0.0;  // arc length from the start of the polyline
    double distance = 0.0;    // unsigned distance from the query point
    double signed_offset = 0.0;  // lateral offset, positive toward +steer side
};

class Polyline {
  public:
    explicit Polyline(std::vector<Vec2> points);

    const std::vector<Vec2>& points() const { return points_; }
    double total_length() const { return cumulative_.back(); }
    double segment_length(std::size_t i) const { return cumulative_[i + 1] - cumulative_[i]; }
    std::size_t segment_count() const { return points_.size() - 1; }

    PolylineProjection project(Vec2 p) const;

    /// Point at the given arc length (clamped to [0, total]).
    Vec2 point_at(double arc_length) const;
    /// Tangent heading at the given arc length.
    double heading_at(double arc_length) const;

  private:
    std::vector<Vec2> points_;
    std::vector<double> cumulative_;  // cumulative_[i] = arc length up to points_[i]
};

}  // namespace adloop::geom

#endif
