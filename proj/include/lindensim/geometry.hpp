#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <vector>

namespace lindensim {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2 operator/(double s) const { return {x / s, y / s}; }
    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }

    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double cross(const Vec2& o) const { return x * o.y - y * o.x; }
    double norm() const { return std::hypot(x, y); }
    double squared_norm() const { return x * x + y * y; }
    Vec2 normalized() const {
        const double n = norm();
        return n > 0.0 ? Vec2{x / n, y / n} : Vec2{1.0, 0.0};
    }
    Vec2 perp() const { return {-y, x}; }  // 90 deg CCW
    bool operator==(const Vec2& o) const { return x == o.x && y == o.y; }
};

inline Vec2 operator*(double s, const Vec2& v) { return {v.x * s, v.y * s}; }

/// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
    const double two_pi = 2.0 * M_PI;
    a = std::fmod(a, two_pi);
    if (a <= -M_PI) a += two_pi;
    if (a > M_PI) a -= two_pi;
    return a;
}

/// Planar rigid pose (x, y, yaw).
struct Pose2 {
    double x = 0.0;
    double y = 0.0;
    double yaw = 0.0;

    Pose2() = default;
    Pose2(double x_, double y_, double yaw_) : x(x_), y(y_), yaw(yaw_) {}

    Vec2 position() const { return {x, y}; }
    Vec2 heading() const { return {std::cos(yaw), std::sin(yaw)}; }

    /// Map a point from this pose's frame into the parent frame.
    Vec2 transform(const Vec2& p) const {
        const double c = std::cos(yaw), s = std::sin(yaw);
        return {x + c * p.x - s * p.y, y + s * p.x + c * p.y};
    }

    /// Map a parent-frame point into this pose's frame.
    Vec2 inverse_transform(const Vec2& p) const {
        const double c = std::cos(yaw), s = std::sin(yaw);
        const double dx = p.x - x, dy = p.y - y;
        return {c * dx + s * dy, -s * dx + c * dy};
    }
};

/// Rigid composition: apply b within a's frame.
inline Pose2 compose(const Pose2& a, const Pose2& b) {
    const Vec2 t = a.transform({b.x, b.y});
    return {t.x, t.y, wrap_angle(a.yaw + b.yaw)};
}

inline Pose2 inverse(const Pose2& p) {
    const double c = std::cos(p.yaw), s = std::sin(p.yaw);
    return {-(c * p.x + s * p.y), -(-s * p.x + c * p.y), wrap_angle(-p.yaw)};
}

/// Oriented rectangular agent body.
struct Footprint {
    Vec2 center;
    double yaw = 0.0;
    double half_length = 1.0;
    double half_width = 1.0;

    std::array<Vec2, 4> corners() const {
        const double c = std::cos(yaw), s = std::sin(yaw);
        const Vec2 ax{c, s}, ay{-s, c};
        return {center + ax * half_length + ay * half_width,
                center - ax * half_length + ay * half_width,
                center - ax * half_length - ay * half_width,
                center + ax * half_length - ay * half_width};
    }
    double circumradius() const { return std::hypot(half_length, half_width); }
};

/// Separating-axis overlap test for oriented rectangles. Touching counts as overlap.
bool overlap(const Footprint& a, const Footprint& b);

/// Ray vs segment intersection. Returns the ray parameter t > eps of the nearest
/// crossing, or nullopt. `dir` need not be normalized; t is in units of |dir|.
std::optional<double> ray_segment_intersection(const Vec2& origin, const Vec2& dir,
                                               const Vec2& p, const Vec2& q,
                                               double eps = 1e-12);

double point_segment_distance(const Vec2& pt, const Vec2& a, const Vec2& b);
double segment_segment_distance(const Vec2& a1, const Vec2& a2,
                                const Vec2& b1, const Vec2& b2);
bool segments_intersect(const Vec2& a1, const Vec2& a2, const Vec2& b1, const Vec2& b2);

/// Winding-based point-in-polygon (vertices in order, closed implicitly).
bool point_in_polygon(const Vec2& pt, const std::vector<Vec2>& poly);

/// True when no two non-adjacent edges intersect.
bool polygon_is_simple(const std::vector<Vec2>& poly);

/// Minimum distance between two oriented rectangles (0 when overlapping).
double footprint_distance(const Footprint& a, const Footprint& b);

/// Distance from a point to an oriented rectangle (0 when inside).
double point_footprint_distance(const Vec2& pt, const Footprint& f);

struct Aabb {
    Vec2 min{1e300, 1e300};
    Vec2 max{-1e300, -1e300};
    void expand(const Vec2& p) {
        min.x = std::min(min.x, p.x);
        min.y = std::min(min.y, p.y);
        max.x = std::max(max.x, p.x);
        max.y = std::max(max.y, p.y);
    }
    bool contains(const Vec2& p) const {
        return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y;
    }
    bool valid() const { return min.x <= max.x && min.y <= max.y; }
};

/// Piecewise-linear arclength-parameterized polyline.
class Polyline {
public:
    Polyline() = default;
    explicit Polyline(std::vector<Vec2> pts);

    const std::vector<Vec2>& points() const { return pts_; }
    double length() const { return cum_.empty() ? 0.0 : cum_.back(); }
    std::size_t size() const { return pts_.size(); }
    bool empty() const { return pts_.empty(); }

    /// Cumulative arclength at vertex i.
    double arclength_at(std::size_t i) const { return cum_[i]; }

    /// Point at arclength s (clamped to [0, length]).
    Vec2 sample(double s) const;

    /// Unit tangent at arclength s.
    Vec2 tangent(double s) const;

    /// Nearest point on the polyline; returns (arclength, distance).
    std::pair<double, double> project(const Vec2& p) const;

private:
    std::vector<Vec2> pts_;
    std::vector<double> cum_;
};

}  // namespace lindensim
