#include "lindensim/guidance.hpp"

#include <algorithm>
#include <cmath>

namespace lindensim {

Route::Route(std::vector<Waypoint> waypoints, bool cyclic)
    : waypoints_(std::move(waypoints)), cyclic_(cyclic) {
    std::vector<Vec2> pts;
    pts.reserve(waypoints_.size() + 1);
    for (const auto& wp : waypoints_) pts.push_back(wp.pose.position());
    if (cyclic_ && !pts.empty()) pts.push_back(pts.front());  // close the loop
    path_ = Polyline(std::move(pts));
}

Vec2 Route::sample(double s) const {
    if (cyclic_ && length() > 0.0) s = std::fmod(std::fmod(s, length()) + length(), length());
    return path_.sample(s);
}

Vec2 Route::tangent(double s) const {
    if (cyclic_ && length() > 0.0) s = std::fmod(std::fmod(s, length()) + length(), length());
    return path_.tangent(s);
}

double Route::target_speed_at(double s) const {
    if (waypoints_.empty()) return 0.0;
    if (cyclic_ && length() > 0.0) s = std::fmod(std::fmod(s, length()) + length(), length());
    for (std::size_t i = 0; i < waypoints_.size(); ++i) {
        if (path_.arclength_at(i) >= s) return waypoints_[i].target_speed;
    }
    return cyclic_ ? waypoints_.front().target_speed : waypoints_.back().target_speed;
}

Route record_route(const std::vector<Pose2>& poses, const std::vector<double>& speeds,
                   double min_spacing) {
    std::vector<Waypoint> wps;
    for (std::size_t i = 0; i < poses.size(); ++i) {
        const double speed = i < speeds.size() ? speeds[i] : 0.0;
        if (wps.empty() ||
            (poses[i].position() - wps.back().pose.position()).norm() >= min_spacing) {
            wps.push_back({poses[i], speed});
        }
    }
    if (wps.size() < 2) throw RouteTooShortError();
    const bool cyclic =
        (poses.back().position() - wps.front().pose.position()).norm() <= min_spacing;
    return Route(std::move(wps), cyclic);
}

GoalPoint select_goal(const Route& route, const Pose2& ego, double lookahead,
                      const GuidanceConfig& cfg) {
    const Vec2 e = ego.position();
    const auto [s0, offtrack] = route.project(e);
    if (offtrack > cfg.max_offtrack) throw OffRouteError(offtrack);

    const auto& pts = route.path().points();
    const double total = route.length();

    Vec2 goal_world = route.sample(s0);
    double goal_s = s0;

    if ((goal_world - e).norm() < lookahead) {
        // forward vertex walk from s0: remaining vertices, plus one wrapped lap
        // for cyclic routes (the stored polyline already closes the loop)
        std::vector<Vec2> walk{route.sample(s0)};
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (route.path().arclength_at(i) > s0) walk.push_back(pts[i]);
        }
        if (route.cyclic()) {
            for (std::size_t i = 1; i < pts.size(); ++i) {
                walk.push_back(pts[i]);
                if (route.path().arclength_at(i) >= s0) break;
            }
        }

        bool found = false;
        double sa = s0;
        for (std::size_t i = 0; i + 1 < walk.size(); ++i) {
            const Vec2 a = walk[i];
            const Vec2 b = walk[i + 1];
            const Vec2 d = b - a;
            const double seg_len = d.norm();
            if (seg_len > 0.0 && (b - e).norm() >= lookahead && (a - e).norm() < lookahead) {
                // solve |a + t d - e|^2 = L^2 for t in [0, 1]
                const Vec2 w = a - e;
                const double A = d.squared_norm();
                const double B = 2.0 * w.dot(d);
                const double C = w.squared_norm() - lookahead * lookahead;
                const double disc = std::max(0.0, B * B - 4.0 * A * C);
                const double t = std::clamp((-B + std::sqrt(disc)) / (2.0 * A), 0.0, 1.0);
                goal_world = a + d * t;
                goal_s = sa + t * seg_len;
                found = true;
                break;
            }
            sa += seg_len;
        }
        if (!found) {
            // non-cyclic route ends before reaching the lookahead circle
            goal_world = pts.back();
            goal_s = total;
        }
    }

    GoalPoint goal;
    goal.point = ego.inverse_transform(goal_world);
    goal.lookahead = goal.point.norm();
    goal.route_arclength = route.cyclic() ? std::fmod(goal_s, std::max(total, 1e-12)) : goal_s;
    return goal;
}

double pure_pursuit_steer(const GoalPoint& goal, double wheelbase, double steering_limit) {
    const double ld = goal.lookahead;
    if (ld <= 0.0) return 0.0;
    const double kappa = 2.0 * goal.point.y / (ld * ld);
    return std::clamp(std::atan(kappa * wheelbase), -steering_limit, steering_limit);
}

double velocity_set(const Route& route, const Pose2& ego, const SpeedConstraints& constraints,
                    const GuidanceConfig& cfg) {
    const auto [s, _] = route.project(ego.position());
    double target = route.target_speed_at(s);

    const auto brake_profile = [&](double dist) {
        return std::sqrt(2.0 * cfg.comfort_decel * std::max(0.0, dist));
    };
    for (const double d : constraints.stop_line_distances)
        target = std::min(target, brake_profile(d));
    for (const double d : constraints.crosswalk_stop_distances)
        target = std::min(target, brake_profile(d));
    if (constraints.obstacle_distance)
        target = std::min(target, brake_profile(*constraints.obstacle_distance - cfg.standoff));
    return target;
}

ControlCommand twist_filter(const ControlCommand& raw, const ControlCommand& prev,
                            const TwistLimits& limits) {
    if (raw.emergency_brake) {
        ControlCommand out = raw;
        out.accel = -limits.a_max_brake;
        return out;
    }
    ControlCommand out;
    const double max_dsteer = limits.steering_rate_limit * limits.dt;
    const double max_daccel = limits.jerk_limit * limits.dt;
    out.steering_target =
        prev.steering_target +
        std::clamp(raw.steering_target - prev.steering_target, -max_dsteer, max_dsteer);
    out.accel = prev.accel + std::clamp(raw.accel - prev.accel, -max_daccel, max_daccel);
    out.emergency_brake = false;
    return out;
}

}  // namespace lindensim
