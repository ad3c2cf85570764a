#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "lindensim/geometry.hpp"
#include "lindensim/vehicle.hpp"

namespace lindensim {

struct Waypoint {
    Pose2 pose;
    double target_speed = 0.0;  // m/s
};

class Route {
public:
    Route() = default;
    Route(std::vector<Waypoint> waypoints, bool cyclic);

    const std::vector<Waypoint>& waypoints() const { return waypoints_; }
    bool cyclic() const { return cyclic_; }
    double length() const { return path_.length(); }
    const Polyline& path() const { return path_; }

    /// Nearest point on the route: (arclength, distance).
    std::pair<double, double> project(const Vec2& p) const { return path_.project(p); }

    Vec2 sample(double s) const;
    Vec2 tangent(double s) const;

    /// Target speed at arclength s (nearest waypoint at or ahead of s).
    double target_speed_at(double s) const;

private:
    std::vector<Waypoint> waypoints_;
    bool cyclic_ = false;
    Polyline path_;
};

struct RouteTooShortError : std::runtime_error {
    RouteTooShortError() : std::runtime_error("pose stream yields fewer than 2 waypoints") {}
};

struct OffRouteError : std::runtime_error {
    explicit OffRouteError(double dist)
        : std::runtime_error("ego is " + std::to_string(dist) + " m off the route") {}
};

/// Record a route from a driven pose stream: emit a waypoint whenever the pose
/// has moved min_spacing from the last emitted one. The route is cyclic when
/// the drive returns to the start within min_spacing.
Route record_route(const std::vector<Pose2>& poses, const std::vector<double>& speeds,
                   double min_spacing);

struct GoalPoint {
    Vec2 point;          // vehicle frame (g_x, g_y)
    double lookahead = 0.0;
    double route_arclength = 0.0;  // arclength of the goal on the route
};

struct GuidanceConfig {
    double max_offtrack = 5.0;        // m
    double lookahead_gain = 1.5;      // s
    double lookahead_min = 3.0;       // m
    double lookahead_max = 12.0;      // m
    double comfort_decel = 2.0;       // m/s^2
    double standoff = 4.0;            // m, obstacle-following gap
    double steering_limit = 0.55;     // rad
};

inline double lookahead_for_speed(double speed, const GuidanceConfig& cfg = {}) {
    return std::clamp(cfg.lookahead_gain * speed, cfg.lookahead_min, cfg.lookahead_max);
}

/// Goal selection: nearest route point, then forward along arclength to the
/// first point at Euclidean distance L_d from the ego (interpolated; wraps on
/// cyclic routes; never walks backward). Throws OffRouteError beyond
/// max_offtrack.
GoalPoint select_goal(const Route& route, const Pose2& ego, double lookahead,
                      const GuidanceConfig& cfg = {});

/// Pure pursuit: circular arc through the origin and the goal, tangent to the
/// heading; kappa = 2 g_y / L_d^2, delta = atan(kappa * L), clamped.
double pure_pursuit_steer(const GoalPoint& goal, double wheelbase,
                          double steering_limit = 0.55);

/// Inputs for the speed rule chain, expressed as path distances ahead of the ego.
struct SpeedConstraints {
    std::vector<double> stop_line_distances;   // active stop lines: reach 0 exactly there
    std::vector<double> crosswalk_stop_distances;  // occupied crosswalk stop points
    std::optional<double> obstacle_distance;   // nearest on-path obstacle
};

/// Minimum of the waypoint speed and braking profiles v = sqrt(2 a d) toward
/// each active constraint; the obstacle rule keeps the standoff gap.
double velocity_set(const Route& route, const Pose2& ego, const SpeedConstraints& constraints,
                    const GuidanceConfig& cfg = {});

struct TwistLimits {
    double steering_rate_limit = 0.7;  // rad/s
    double jerk_limit = 60.0;          // m/s^3
    double dt = 0.02;
    double a_max_brake = 6.0;
};

/// Rate-limit steering and acceleration against the previous command.
/// Emergency braking bypasses the filter entirely.
ControlCommand twist_filter(const ControlCommand& raw, const ControlCommand& prev,
                            const TwistLimits& limits);

}  // namespace lindensim
