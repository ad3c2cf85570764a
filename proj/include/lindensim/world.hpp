#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "lindensim/geometry.hpp"
#include "lindensim/road_network.hpp"

namespace lindensim {

struct ObstacleSegment {
    Vec2 a;
    Vec2 b;
};

/// Arclength-parameterized drivable path derived from one road segment direction.
struct LanePath {
    std::int64_t segment_id = 0;
    bool forward = true;  // direction relative to the stored centerline
    int lane_index = 0;
    Polyline path;
    double speed_limit = 11.18;
};

struct WorldStopLine {
    std::int64_t segment_id = 0;
    double arclength = 0.0;  // along the stored centerline
    Vec2 position;
};

struct WorldCrosswalk {
    std::int64_t segment_id = 0;
    double arclength = 0.0;
    double width = 3.0;
    Vec2 position;
    Vec2 across;  // unit vector across the road at the crosswalk
};

struct StaticWorld {
    std::vector<ObstacleSegment> obstacle_segments;
    std::vector<LanePath> lane_paths;
    std::vector<WorldStopLine> stop_lines;
    std::vector<WorldCrosswalk> crosswalks;
    Aabb bounds;
    double lane_width = 3.5;
};

struct WorldConfig {
    double lane_width = 3.5;
};

/// Compile the road network into static geometry: building walls become
/// obstacle segments; each segment direction gets lane paths offset
/// (lane index + 0.5) * lane_width from the centerline.
StaticWorld compile_world(const RoadNetwork& net, const WorldConfig& cfg = {});

enum class RayTarget { none, static_obstacle, agent };

struct RayHit {
    double distance = 0.0;
    Vec2 hit_point;
    RayTarget target = RayTarget::none;
    int agent_id = -1;
};

/// Exact nearest intersection of a ray against all static segments and agent
/// rectangle edges. Misses return target none with distance max_range.
RayHit raycast(const StaticWorld& world, const std::vector<Footprint>& agents,
               const std::vector<int>& agent_ids, const Vec2& origin, double angle,
               double max_range);

/// Convenience overload: agent ids are their indices.
RayHit raycast(const StaticWorld& world, const std::vector<Footprint>& agents,
               const Vec2& origin, double angle, double max_range);

}  // namespace lindensim
