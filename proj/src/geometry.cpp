#include "lindensim/geometry.hpp"

#include <algorithm>
#include <limits>

namespace lindensim {

namespace {

// Project rectangle corners onto an axis; return [min, max].
std::pair<double, double> project_onto(const std::array<Vec2, 4>& corners, const Vec2& axis) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& c : corners) {
        const double d = c.dot(axis);
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    return {lo, hi};
}

}  // namespace

bool overlap(const Footprint& a, const Footprint& b) {
    const auto ca = a.corners();
    const auto cb = b.corners();
    const Vec2 axes[4] = {
        {std::cos(a.yaw), std::sin(a.yaw)},
        {-std::sin(a.yaw), std::cos(a.yaw)},
        {std::cos(b.yaw), std::sin(b.yaw)},
        {-std::sin(b.yaw), std::cos(b.yaw)},
    };
    for (const auto& axis : axes) {
        const auto [amin, amax] = project_onto(ca, axis);
        const auto [bmin, bmax] = project_onto(cb, axis);
        if (amax < bmin || bmax < amin) return false;
    }
    return true;
}

std::optional<double> ray_segment_intersection(const Vec2& origin, const Vec2& dir,
                                               const Vec2& p, const Vec2& q, double eps) {
    const Vec2 e = q - p;
    const double denom = dir.cross(e);
    if (denom == 0.0) return std::nullopt;  // parallel
    const Vec2 w = p - origin;
    const double t = w.cross(e) / denom;
    const double s = w.cross(dir) / denom;
    if (t > eps && s >= 0.0 && s <= 1.0) return t;
    return std::nullopt;
}

double point_segment_distance(const Vec2& pt, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double len2 = ab.squared_norm();
    if (len2 == 0.0) return (pt - a).norm();
    const double u = std::clamp((pt - a).dot(ab) / len2, 0.0, 1.0);
    return (pt - (a + ab * u)).norm();
}

bool segments_intersect(const Vec2& a1, const Vec2& a2, const Vec2& b1, const Vec2& b2) {
    const auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
        const double v = (q - p).cross(r - p);
        return (v > 0.0) - (v < 0.0);
    };
    const int o1 = orient(a1, a2, b1), o2 = orient(a1, a2, b2);
    const int o3 = orient(b1, b2, a1), o4 = orient(b1, b2, a2);
    if (o1 != o2 && o3 != o4) return true;
    const auto on = [](const Vec2& p, const Vec2& q, const Vec2& r) {
        return std::min(p.x, q.x) <= r.x && r.x <= std::max(p.x, q.x) &&
               std::min(p.y, q.y) <= r.y && r.y <= std::max(p.y, q.y);
    };
    if (o1 == 0 && on(a1, a2, b1)) return true;
    if (o2 == 0 && on(a1, a2, b2)) return true;
    if (o3 == 0 && on(b1, b2, a1)) return true;
    if (o4 == 0 && on(b1, b2, a2)) return true;
    return false;
}

double segment_segment_distance(const Vec2& a1, const Vec2& a2,
                                const Vec2& b1, const Vec2& b2) {
    if (segments_intersect(a1, a2, b1, b2)) return 0.0;
    return std::min({point_segment_distance(a1, b1, b2), point_segment_distance(a2, b1, b2),
                     point_segment_distance(b1, a1, a2), point_segment_distance(b2, a1, a2)});
}

bool point_in_polygon(const Vec2& pt, const std::vector<Vec2>& poly) {
    bool inside = false;
    const std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[j];
        if ((a.y > pt.y) != (b.y > pt.y) &&
            pt.x < (b.x - a.x) * (pt.y - a.y) / (b.y - a.y) + a.x) {
            inside = !inside;
        }
    }
    return inside;
}

bool polygon_is_simple(const std::vector<Vec2>& poly) {
    const std::size_t n = poly.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a1 = poly[i];
        const Vec2& a2 = poly[(i + 1) % n];
        for (std::size_t j = i + 1; j < n; ++j) {
            // skip adjacent edges (share a vertex)
            if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
            if (segments_intersect(a1, a2, poly[j], poly[(j + 1) % n])) return false;
        }
    }
    return true;
}

double footprint_distance(const Footprint& a, const Footprint& b) {
    if (overlap(a, b)) return 0.0;
    const auto ca = a.corners();
    const auto cb = b.corners();
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            best = std::min(best, segment_segment_distance(ca[i], ca[(i + 1) % 4],
                                                           cb[j], cb[(j + 1) % 4]));
        }
    }
    return best;
}

double point_footprint_distance(const Vec2& pt, const Footprint& f) {
    // work in the rectangle's frame
    const double c = std::cos(f.yaw), s = std::sin(f.yaw);
    const Vec2 d = pt - f.center;
    const double lx = std::abs(c * d.x + s * d.y);
    const double ly = std::abs(-s * d.x + c * d.y);
    const double dx = std::max(0.0, lx - f.half_length);
    const double dy = std::max(0.0, ly - f.half_width);
    return std::hypot(dx, dy);
}

Polyline::Polyline(std::vector<Vec2> pts) : pts_(std::move(pts)) {
    cum_.reserve(pts_.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < pts_.size(); ++i) {
        if (i > 0) acc += (pts_[i] - pts_[i - 1]).norm();
        cum_.push_back(acc);
    }
}

Vec2 Polyline::sample(double s) const {
    if (pts_.empty()) return {};
    if (pts_.size() == 1 || s <= 0.0) return pts_.front();
    if (s >= length()) return pts_.back();
    const auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
    const std::size_t i = static_cast<std::size_t>(it - cum_.begin());
    const double seg = cum_[i] - cum_[i - 1];
    const double u = seg > 0.0 ? (s - cum_[i - 1]) / seg : 0.0;
    return pts_[i - 1] + (pts_[i] - pts_[i - 1]) * u;
}

Vec2 Polyline::tangent(double s) const {
    if (pts_.size() < 2) return {1.0, 0.0};
    s = std::clamp(s, 0.0, length());
    std::size_t i = 1;
    const auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
    i = std::min<std::size_t>(std::max<std::size_t>(1, it - cum_.begin()), pts_.size() - 1);
    return (pts_[i] - pts_[i - 1]).normalized();
}

std::pair<double, double> Polyline::project(const Vec2& p) const {
    if (pts_.empty()) return {0.0, std::numeric_limits<double>::infinity()};
    if (pts_.size() == 1) return {0.0, (p - pts_.front()).norm()};
    double best_s = 0.0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < pts_.size(); ++i) {
        const Vec2 a = pts_[i], b = pts_[i + 1];
        const Vec2 ab = b - a;
        const double len2 = ab.squared_norm();
        const double u = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
        const Vec2 q = a + ab * u;
        const double d = (p - q).norm();
        if (d < best_d) {
            best_d = d;
            best_s = cum_[i] + u * std::sqrt(len2);
        }
    }
    return {best_s, best_d};
}

}  // namespace lindensim
