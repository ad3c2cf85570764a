#pragma once

// Programmatic fixtures shared across test binaries.

#include <cmath>
#include <vector>

#include "lindensim/geometry.hpp"
#include "lindensim/guidance.hpp"
#include "lindensim/rng.hpp"
#include "lindensim/road_network.hpp"
#include "lindensim/sensors.hpp"
#include "lindensim/world.hpp"

namespace lindensim::testing {

/// Street scene along +x: building facades on both sides with door-style
/// notches every block so scan matching observes longitudinal features.
inline StaticWorld street_world(double length, double half_gap = 6.0) {
    StaticWorld w;
    auto add = [&w](Vec2 a, Vec2 b) {
        w.obstacle_segments.push_back({a, b});
        w.bounds.expand(a);
        w.bounds.expand(b);
    };
    const double block = 12.0;
    for (double x0 = -block; x0 < length + block; x0 += block) {
        for (const double side : {+1.0, -1.0}) {
            const double front = side * half_gap;
            const double back = side * (half_gap + 4.0);
            // facade with a 4 m recess in the last third of the block
            add({x0, front}, {x0 + 8.0, front});
            add({x0 + 8.0, front}, {x0 + 8.0, back});
            add({x0 + 8.0, back}, {x0 + block, back});
            add({x0 + block, back}, {x0 + block, front});
        }
    }
    return w;
}

/// Straight route along +x at y = 0 with uniform target speed.
inline Route straight_route(double length, double speed, double spacing = 1.0) {
    std::vector<Waypoint> wps;
    for (double x = 0.0; x <= length + 1e-9; x += spacing)
        wps.push_back({{x, 0.0, 0.0}, speed});
    return Route(std::move(wps), false);
}

/// S-curve route: straight lead-in, sine lateral sweep, straight lead-out.
inline Route curved_route(double speed) {
    std::vector<Waypoint> wps;
    for (double x = 0.0; x <= 30.0; x += 1.0) wps.push_back({{x, 0.0, 0.0}, speed});
    for (double x = 31.0; x <= 90.0; x += 1.0) {
        const double phase = (x - 30.0) / 60.0 * 2.0 * M_PI;
        const double y = 4.0 * std::sin(phase);
        const double dy = 4.0 * std::cos(phase) * 2.0 * M_PI / 60.0;
        wps.push_back({{x, y, std::atan2(dy, 1.0)}, speed});
    }
    for (double x = 91.0; x <= 120.0; x += 1.0) wps.push_back({{x, 0.0, 0.0}, speed});
    return Route(std::move(wps), false);
}

/// Dense cloud mimicking a near-field-heavy scan: ranges drawn toward the
/// sensor so points concentrate near the origin.
inline PointCloud dense_cloud(Rng& rng, int n = 2000) {
    PointCloud cloud;
    for (int i = 0; i < n; ++i) {
        const double angle = rng.uniform(-M_PI, M_PI);
        const double r = 0.5 + 20.0 * rng.uniform01() * rng.uniform01();
        cloud.points.push_back({r * std::cos(angle), r * std::sin(angle)});
    }
    return cloud;
}

/// Straight two-way road along +x (one lane each way). With buildings, block
/// facades with recesses flank the road so lidar maps have structure.
inline RoadNetwork straight_network(double length, bool buildings = false,
                                    double speed_limit = 11.0) {
    RoadNetwork net;
    RoadSegment seg;
    seg.id = 1;
    for (double x = 0.0; x < length; x += 10.0) seg.centerline.push_back({x, 0.0});
    seg.centerline.push_back({length, 0.0});
    seg.speed_limit = speed_limit;
    net.segments.push_back(seg);
    if (buildings) {
        // alternating setbacks give scan matching longitudinal structure
        const double block = 12.0;
        int i = 0;
        for (double x0 = -block; x0 < length + block; x0 += block, ++i) {
            for (const double side : {+1.0, -1.0}) {
                const double front = side * (i % 2 == 0 ? 8.0 : 6.5);
                const double back = side * 12.0;
                net.buildings.push_back({{x0 + 1.0, front},
                                         {x0 + block - 1.0, front},
                                         {x0 + block - 1.0, back},
                                         {x0 + 1.0, back}});
            }
        }
    }
    for (const auto& s : net.segments)
        for (const auto& p : s.centerline) net.bounds.expand(p);
    return net;
}

/// Perpendicular crossroads centered at the origin, both roads two-way with
/// one lane per direction; the junction carries the given control.
/// Lane path order after compile_world: 0 = east–west W->E (y = -1.75),
/// 1 = E->W (y = +1.75), 2 = north–south S->N (x = +1.75), 3 = N->S (x = -1.75).
inline RoadNetwork crossroads_network(double arm = 80.0,
                                      IntersectionControl control =
                                          IntersectionControl::stop_sign) {
    RoadNetwork net;
    RoadSegment ew;
    ew.id = 1;
    for (double x = -arm; x < arm; x += 10.0) ew.centerline.push_back({x, 0.0});
    ew.centerline.push_back({arm, 0.0});
    RoadSegment ns;
    ns.id = 2;
    for (double y = -arm; y < arm; y += 10.0) ns.centerline.push_back({0.0, y});
    ns.centerline.push_back({0.0, arm});
    net.segments = {ew, ns};
    net.intersections.push_back({{0.0, 0.0}, {1, 2}, control});
    for (const auto& s : net.segments)
        for (const auto& p : s.centerline) net.bounds.expand(p);
    return net;
}

/// Straight road with one mapped crosswalk.
inline RoadNetwork crosswalk_network(double length, double crosswalk_at) {
    RoadNetwork net = straight_network(length);
    net.crosswalks.push_back({1, crosswalk_at, 3.0});
    return net;
}

/// Route along one compiled lane path.
inline Route lane_route(const StaticWorld& world, std::size_t lane, double speed,
                        double spacing = 2.0) {
    const Polyline& path = world.lane_paths.at(lane).path;
    std::vector<Waypoint> wps;
    for (double s = 0.0; s <= path.length() + 1e-9; s += spacing) {
        const Vec2 p = path.sample(s);
        const Vec2 t = path.tangent(s);
        wps.push_back({{p.x, p.y, std::atan2(t.y, t.x)}, speed});
    }
    return Route(std::move(wps), false);
}

}  // namespace lindensim::testing
