#include "lindensim/world.hpp"

#include <algorithm>
#include <cmath>

namespace lindensim {

namespace {

// Offset a polyline laterally by d (positive = left of travel direction),
// using averaged vertex normals.
std::vector<Vec2> offset_polyline(const std::vector<Vec2>& pts, double d) {
    std::vector<Vec2> out;
    out.reserve(pts.size());
    const std::size_t n = pts.size();
    for (std::size_t i = 0; i < n; ++i) {
        Vec2 dir;
        if (i == 0) dir = (pts[1] - pts[0]).normalized();
        else if (i + 1 == n) dir = (pts[n - 1] - pts[n - 2]).normalized();
        else dir = ((pts[i] - pts[i - 1]).normalized() + (pts[i + 1] - pts[i]).normalized()).normalized();
        out.push_back(pts[i] + dir.perp() * d);
    }
    return out;
}

}  // namespace

StaticWorld compile_world(const RoadNetwork& net, const WorldConfig& cfg) {
    StaticWorld world;
    world.lane_width = cfg.lane_width;

    for (const auto& poly : net.buildings) {
        const std::size_t n = poly.size();
        for (std::size_t i = 0; i < n; ++i) {
            world.obstacle_segments.push_back({poly[i], poly[(i + 1) % n]});
        }
    }

    for (const auto& seg : net.segments) {
        // right-hand traffic: forward lanes offset to the right (negative left offset)
        for (int lane = 0; lane < seg.lane_count; ++lane) {
            const double d = (lane + 0.5) * cfg.lane_width;
            LanePath fwd;
            fwd.segment_id = seg.id;
            fwd.forward = true;
            fwd.lane_index = lane;
            fwd.speed_limit = seg.speed_limit;
            fwd.path = Polyline(offset_polyline(seg.centerline, -d));
            world.lane_paths.push_back(std::move(fwd));
        }
        if (!seg.oneway) {
            for (int lane = 0; lane < seg.lane_count; ++lane) {
                const double d = (lane + 0.5) * cfg.lane_width;
                std::vector<Vec2> rev(seg.centerline.rbegin(), seg.centerline.rend());
                LanePath bwd;
                bwd.segment_id = seg.id;
                bwd.forward = false;
                bwd.lane_index = lane;
                bwd.speed_limit = seg.speed_limit;
                bwd.path = Polyline(offset_polyline(rev, -d));
                world.lane_paths.push_back(std::move(bwd));
            }
        }
    }

    for (const auto& sl : net.stop_lines) {
        const RoadSegment* seg = net.find_segment(sl.segment_id);
        if (!seg) continue;
        Polyline pl(seg->centerline);
        world.stop_lines.push_back({sl.segment_id, sl.arclength, pl.sample(sl.arclength)});
    }
    for (const auto& cw : net.crosswalks) {
        const RoadSegment* seg = net.find_segment(cw.segment_id);
        if (!seg) continue;
        Polyline pl(seg->centerline);
        WorldCrosswalk w;
        w.segment_id = cw.segment_id;
        w.arclength = cw.arclength;
        w.width = cw.width;
        w.position = pl.sample(cw.arclength);
        w.across = pl.tangent(cw.arclength).perp();
        world.crosswalks.push_back(w);
    }

    for (const auto& s : world.obstacle_segments) {
        world.bounds.expand(s.a);
        world.bounds.expand(s.b);
    }
    for (const auto& lp : world.lane_paths) {
        for (const auto& p : lp.path.points()) world.bounds.expand(p);
    }
    return world;
}

RayHit raycast(const StaticWorld& world, const std::vector<Footprint>& agents,
               const std::vector<int>& agent_ids, const Vec2& origin, double angle,
               double max_range) {
    const Vec2 dir{std::cos(angle), std::sin(angle)};
    RayHit hit;
    hit.distance = max_range;
    hit.target = RayTarget::none;

    for (const auto& seg : world.obstacle_segments) {
        const auto t = ray_segment_intersection(origin, dir, seg.a, seg.b);
        if (t && *t <= hit.distance) {
            // strictly nearer, or equally near static beats nothing
            if (*t < hit.distance || hit.target == RayTarget::none) {
                hit.distance = *t;
                hit.target = RayTarget::static_obstacle;
                hit.agent_id = -1;
            }
        }
    }
    for (std::size_t i = 0; i < agents.size(); ++i) {
        const auto corners = agents[i].corners();
        for (int e = 0; e < 4; ++e) {
            const auto t =
                ray_segment_intersection(origin, dir, corners[e], corners[(e + 1) % 4]);
            if (t && *t < hit.distance) {
                hit.distance = *t;
                hit.target = RayTarget::agent;
                hit.agent_id = i < agent_ids.size() ? agent_ids[i] : static_cast<int>(i);
            }
        }
    }
    hit.hit_point = origin + dir * hit.distance;
    return hit;
}

RayHit raycast(const StaticWorld& world, const std::vector<Footprint>& agents,
               const Vec2& origin, double angle, double max_range) {
    return raycast(world, agents, {}, origin, angle, max_range);
}

}  // namespace lindensim
