#include "adloop/geometry.hpp"

#include <array>
#include <limits>
#include <stdexcept>

namespace adloop::geom {

namespace {

std::array<Vec2, 4> obb_corners(const Obb& r) {
    const Vec2 fwd = from_heading(r.heading) * (r.length * 0.5);
    const Vec2 side = rotate(from_heading(r.heading), M_PI / 2.0) * (r.width * 0.5);
    return {r.center + fwd + side, r.center + fwd - side, r.center - fwd - side,
            r.center - fwd + side};
}

bool separated_on_axes(const Obb& a, const Obb& b) {
    const auto ca = obb_corners(a);
    const auto cb = obb_corners(b);
    const Vec2 axes[2] = {from_heading(a.heading), rotate(from_heading(a.heading), M_PI / 2.0)};
    for (const Vec2& axis : axes) {
        double amin = std::numeric_limits<double>::max(), amax = -amin;
        double bmin = amin, bmax = amax;
        for (const Vec2& c : ca) {
            const double d = c.dot(axis);
            amin = std::min(amin, d);
            amax = std::max(amax, d);
        }
        for (const Vec2& c : cb) {
            const double d = c.dot(axis);
            bmin = std::min(bmin, d);
            bmax = std::max(bmax, d);
        }
        if (amax < bmin || bmax < amin) return true;
    }
    return false;
}

}  // namespace

bool obb_overlap(const Obb& a, const Obb& b) {
    return !separated_on_axes(a, b) && !separated_on_axes(b, a);
}

bool point_in_obb(Vec2 p, const Obb& r) {
    const Vec2 rel = rotate(p - r.center, -r.heading);
    return std::abs(rel.x) <= r.length * 0.5 && std::abs(rel.y) <= r.width * 0.5;
}

Polyline::Polyline(std::vector<Vec2> points) : points_(std::move(points)) {
    if (points_.size() < 2) throw std::invalid_argument("polyline needs >= 2 points");
    cumulative_.resize(points_.size());
    cumulative_[0] = 0.0;
    for (std::size_t i = 1; i < points_.size(); ++i) {
        const double seg = (points_[i] - points_[i - 1]).norm();
        if (seg <= 0.0) throw std::invalid_argument("polyline has coincident consecutive points");
        cumulative_[i] = cumulative_[i - 1] + seg;
    }
}

PolylineProjection Polyline::project(Vec2 p) const {
    PolylineProjection best;
    best.distance = std::numeric_limits<double>::max();
    for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
        const Vec2 a = points_[i];
        const Vec2 d = points_[i + 1] - a;
        const double len2 = d.dot(d);
        double t = len2 > 0.0 ? (p - a).dot(d) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const Vec2 q = a + d * t;
        const double dist = (p - q).norm();
        if (dist < best.distance) {
            best.segment = i;
            best.t = t;
            best.arc_length = cumulative_[i] + t * segment_length(i);
            best.distance = dist;
            // positive offset lies on the +steer (clockwise-from-tangent) side
            best.signed_offset = d.cross(p - a) >= 0.0 ? dist : -dist;
        }
    }
    return best;
}

Vec2 Polyline::point_at(double arc_length) const {
    const double s = std::clamp(arc_length, 0.0, total_length());
    for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
        if (s <= cumulative_[i + 1] || i + 2 == points_.size()) {
            const double seg = segment_length(i);
            const double t = seg > 0.0 ? (s - cumulative_[i]) / seg : 0.0;
            return points_[i] + (points_[i + 1] - points_[i]) * t;
        }
    }
    return points_.back();
}

double Polyline::heading_at(double arc_length) const {
    const double s = std::clamp(arc_length, 0.0, total_length());
    for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
        if (s <= cumulative_[i + 1] || i + 2 == points_.size()) {
            const Vec2 d = points_[i + 1] - points_[i];
            return std::atan2(d.y, d.x);
        }
    }
    const Vec2 d = points_.back() - points_[points_.size() - 2];
    return std::atan2(d.y, d.x);
}

}  // namespace adloop::geom
