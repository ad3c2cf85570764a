#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lindensim/geometry.hpp"
#include "lindensim/osm.hpp"

namespace lindensim {

struct RoadSegment {
    std::int64_t id = 0;
    std::vector<Vec2> centerline;  // projected, meters
    int lane_count = 1;            // lanes per direction
    double speed_limit = 11.18;    // m/s
    bool oneway = false;
};

enum class IntersectionControl { none, stop_sign, circle };

struct Intersection {
    Vec2 position;
    std::vector<std::int64_t> segment_ids;
    IntersectionControl control = IntersectionControl::none;
};

struct StopLine {
    std::int64_t segment_id = 0;
    double arclength = 0.0;
};

struct Crosswalk {
    std::int64_t segment_id = 0;
    double arclength = 0.0;
    double width = 3.0;
};

enum class IssueKind {
    missing_lane_count,
    missing_speed_limit,
    dangling_way_ref,
    degenerate_way,
    unclosed_building,
};

struct ValidationIssue {
    IssueKind kind;
    std::int64_t subject_id = 0;
    std::string message;
};

std::string to_string(IssueKind kind);
IssueKind issue_kind_from_string(const std::string& s);

struct RoadNetwork {
    Projection projection;
    std::vector<RoadSegment> segments;
    std::vector<Intersection> intersections;
    std::vector<StopLine> stop_lines;
    std::vector<Crosswalk> crosswalks;
    std::vector<std::vector<Vec2>> buildings;  // closed polygons, last vertex != first
    Aabb bounds;
    // issues observed during construction (tag defaults, degenerate ways, ...)
    std::vector<ValidationIssue> build_issues;

    const RoadSegment* find_segment(std::int64_t id) const;
};

struct EmptyNetworkError : std::runtime_error {
    EmptyNetworkError() : std::runtime_error("document contains no highway-tagged ways") {}
};

/// Compile an OSM document into the projected road network. Consumes the tags
/// highway, building, lanes, maxspeed, oneway, junction=roundabout,
/// highway=stop and highway=crossing; everything else is ignored. Missing lane
/// and speed tags fall back to defaults and are recorded as build issues.
RoadNetwork build_network(const OsmDocument& doc, const Projection& proj);

/// Re-check all network invariants plus the defaults recorded at build time.
std::vector<ValidationIssue> validate_network(const RoadNetwork& net);

}  // namespace lindensim
