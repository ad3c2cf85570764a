#include "lindensim/road_network.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>
#include <unordered_set>

namespace lindensim {

std::string to_string(IssueKind kind) {
    switch (kind) {
        case IssueKind::missing_lane_count: return "missing_lane_count";
        case IssueKind::missing_speed_limit: return "missing_speed_limit";
        case IssueKind::dangling_way_ref: return "dangling_way_ref";
        case IssueKind::degenerate_way: return "degenerate_way";
        case IssueKind::unclosed_building: return "unclosed_building";
    }
    return "unknown";
}

IssueKind issue_kind_from_string(const std::string& s) {
    if (s == "missing_lane_count") return IssueKind::missing_lane_count;
    if (s == "missing_speed_limit") return IssueKind::missing_speed_limit;
    if (s == "dangling_way_ref") return IssueKind::dangling_way_ref;
    if (s == "degenerate_way") return IssueKind::degenerate_way;
    if (s == "unclosed_building") return IssueKind::unclosed_building;
    throw std::invalid_argument("unknown issue kind: " + s);
}

const RoadSegment* RoadNetwork::find_segment(std::int64_t id) const {
    for (const auto& s : segments) {
        if (s.id == id) return &s;
    }
    return nullptr;
}

namespace {

constexpr double kDefaultSpeedLimit = 11.18;  // 25 mph residential
constexpr double kMphToMs = 0.44704;

bool tag_truthy(const TagMap& tags, const std::string& key) {
    const auto it = tags.find(key);
    if (it == tags.end()) return false;
    return it->second != "no" && it->second != "false" && it->second != "0";
}

double polyline_length(const std::vector<Vec2>& pts) {
    double len = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) len += (pts[i] - pts[i - 1]).norm();
    return len;
}

}  // namespace

RoadNetwork build_network(const OsmDocument& doc, const Projection& proj) {
    RoadNetwork net;
    net.projection = proj;

    std::unordered_map<std::int64_t, const OsmNode*> node_by_id;
    node_by_id.reserve(doc.nodes.size() * 2);
    for (const auto& n : doc.nodes) node_by_id.emplace(n.id, &n);

    // fixed element order: ascending way id
    std::vector<const OsmWay*> ways;
    ways.reserve(doc.ways.size());
    for (const auto& w : doc.ways) ways.push_back(&w);
    std::sort(ways.begin(), ways.end(),
              [](const OsmWay* a, const OsmWay* b) { return a->id < b->id; });

    std::map<std::int64_t, std::vector<std::int64_t>> ways_at_node;  // node -> highway way ids
    std::unordered_set<std::int64_t> roundabout_ways;
    bool any_highway = false;

    for (const OsmWay* way : ways) {
        const bool is_highway = way->tags.count("highway") > 0;
        const bool is_building = tag_truthy(way->tags, "building");

        if (is_building && !is_highway) {
            std::vector<Vec2> poly;
            for (const auto ref : way->node_refs) {
                const auto it = node_by_id.find(ref);
                if (it != node_by_id.end())
                    poly.push_back(project(it->second->lat, it->second->lon, proj));
            }
            const bool closed = way->node_refs.size() >= 2 &&
                                way->node_refs.front() == way->node_refs.back();
            if (closed) poly.pop_back();
            if (!closed) {
                net.build_issues.push_back(
                    {IssueKind::unclosed_building, way->id,
                     "building way " + std::to_string(way->id) + " is not closed"});
            }
            if (poly.size() >= 3) net.buildings.push_back(std::move(poly));
            continue;
        }
        if (!is_highway) continue;
        any_highway = true;

        std::vector<Vec2> centerline;
        std::vector<std::int64_t> resolved_refs;
        for (const auto ref : way->node_refs) {
            const auto it = node_by_id.find(ref);
            if (it == node_by_id.end()) continue;
            centerline.push_back(project(it->second->lat, it->second->lon, proj));
            resolved_refs.push_back(ref);
        }
        if (centerline.size() < 2) {
            net.build_issues.push_back(
                {IssueKind::degenerate_way, way->id,
                 "way " + std::to_string(way->id) + " has fewer than 2 resolvable nodes"});
            continue;
        }

        RoadSegment seg;
        seg.id = way->id;

        const auto oneway_it = way->tags.find("oneway");
        bool reversed = false;
        if (oneway_it != way->tags.end()) {
            if (oneway_it->second == "yes" || oneway_it->second == "true" ||
                oneway_it->second == "1") {
                seg.oneway = true;
            } else if (oneway_it->second == "-1") {
                seg.oneway = true;
                reversed = true;
            }
        }
        const auto junction_it = way->tags.find("junction");
        const bool is_roundabout =
            junction_it != way->tags.end() && junction_it->second == "roundabout";
        if (is_roundabout) {
            seg.oneway = true;  // roundabouts are one-way by convention
            roundabout_ways.insert(way->id);
        }
        if (reversed) {
            std::reverse(centerline.begin(), centerline.end());
            std::reverse(resolved_refs.begin(), resolved_refs.end());
        }
        seg.centerline = centerline;

        const auto lanes_it = way->tags.find("lanes");
        if (lanes_it == way->tags.end()) {
            seg.lane_count = 1;
            net.build_issues.push_back(
                {IssueKind::missing_lane_count, way->id,
                 "way " + std::to_string(way->id) + " has no lanes tag; defaulted to 1 per direction"});
        } else {
            int total = 1;
            try {
                total = std::max(1, std::stoi(lanes_it->second));
            } catch (const std::exception&) {
                total = 1;
            }
            seg.lane_count = seg.oneway ? total : std::max(1, total / 2);
        }

        const auto speed_it = way->tags.find("maxspeed");
        if (speed_it == way->tags.end()) {
            seg.speed_limit = kDefaultSpeedLimit;
            net.build_issues.push_back(
                {IssueKind::missing_speed_limit, way->id,
                 "way " + std::to_string(way->id) + " has no maxspeed tag; defaulted to 11.18 m/s"});
        } else {
            const std::string& raw = speed_it->second;
            try {
                const double value = std::stod(raw);
                seg.speed_limit =
                    raw.find("mph") != std::string::npos ? value * kMphToMs : value / 3.6;
            } catch (const std::exception&) {
                seg.speed_limit = kDefaultSpeedLimit;
            }
        }

        // stop lines and crosswalks from tagged member nodes
        Polyline pl(centerline);
        for (std::size_t i = 0; i < resolved_refs.size(); ++i) {
            const OsmNode* n = node_by_id.at(resolved_refs[i]);
            const auto hw = n->tags.find("highway");
            if (hw == n->tags.end()) continue;
            if (hw->second == "stop") {
                net.stop_lines.push_back({way->id, pl.arclength_at(i)});
            } else if (hw->second == "crossing") {
                net.crosswalks.push_back({way->id, pl.arclength_at(i), 3.0});
            }
        }

        for (const auto ref : resolved_refs) ways_at_node[ref].push_back(way->id);
        net.segments.push_back(std::move(seg));
    }

    if (!any_highway) throw EmptyNetworkError();

    // intersections at nodes shared by >= 2 highway ways (roundabout members handled below)
    std::unordered_set<std::int64_t> circle_adjacent;
    for (const auto& [node_id, way_ids] : ways_at_node) {
        std::vector<std::int64_t> uniq = way_ids;
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        if (uniq.size() < 2) continue;
        const bool touches_circle = std::any_of(uniq.begin(), uniq.end(), [&](std::int64_t id) {
            return roundabout_ways.count(id) > 0;
        });
        if (touches_circle) {
            for (const auto id : uniq) circle_adjacent.insert(id);
            continue;  // folded into the circle intersection
        }
        Intersection inter;
        const OsmNode* n = node_by_id.at(node_id);
        inter.position = project(n->lat, n->lon, proj);
        inter.segment_ids = std::move(uniq);
        inter.control = IntersectionControl::none;
        const auto hw = n->tags.find("highway");
        if (hw != n->tags.end() && hw->second == "stop")
            inter.control = IntersectionControl::stop_sign;
        net.intersections.push_back(std::move(inter));
    }

    if (!roundabout_ways.empty()) {
        // one circle intersection spanning the member segments and their feeders
        Intersection circle;
        Vec2 centroid;
        std::size_t count = 0;
        for (const auto& seg : net.segments) {
            if (!roundabout_ways.count(seg.id)) continue;
            for (const auto& p : seg.centerline) {
                centroid += p;
                ++count;
            }
        }
        if (count > 0) circle.position = centroid / static_cast<double>(count);
        std::vector<std::int64_t> members(roundabout_ways.begin(), roundabout_ways.end());
        members.insert(members.end(), circle_adjacent.begin(), circle_adjacent.end());
        std::sort(members.begin(), members.end());
        members.erase(std::unique(members.begin(), members.end()), members.end());
        circle.segment_ids = std::move(members);
        circle.control = IntersectionControl::circle;
        net.intersections.push_back(std::move(circle));
    }

    for (const auto& seg : net.segments) {
        for (const auto& p : seg.centerline) net.bounds.expand(p);
    }
    for (const auto& poly : net.buildings) {
        for (const auto& p : poly) net.bounds.expand(p);
    }
    for (const auto& inter : net.intersections) net.bounds.expand(inter.position);
    return net;
}

std::vector<ValidationIssue> validate_network(const RoadNetwork& net) {
    std::vector<ValidationIssue> issues = net.build_issues;

    for (const auto& sl : net.stop_lines) {
        const RoadSegment* seg = net.find_segment(sl.segment_id);
        if (!seg) {
            issues.push_back({IssueKind::dangling_way_ref, sl.segment_id,
                              "stop line references missing segment"});
            continue;
        }
        const double len = polyline_length(seg->centerline);
        if (sl.arclength < 0.0 || sl.arclength > len) {
            issues.push_back({IssueKind::degenerate_way, sl.segment_id,
                              "stop line arclength outside segment"});
        }
    }
    for (const auto& cw : net.crosswalks) {
        const RoadSegment* seg = net.find_segment(cw.segment_id);
        if (!seg) {
            issues.push_back({IssueKind::dangling_way_ref, cw.segment_id,
                              "crosswalk references missing segment"});
            continue;
        }
        const double len = polyline_length(seg->centerline);
        if (cw.arclength < 0.0 || cw.arclength > len) {
            issues.push_back({IssueKind::degenerate_way, cw.segment_id,
                              "crosswalk arclength outside segment"});
        }
    }
    for (std::size_t i = 0; i < net.buildings.size(); ++i) {
        if (!polygon_is_simple(net.buildings[i])) {
            issues.push_back({IssueKind::unclosed_building, static_cast<std::int64_t>(i),
                              "building polygon is degenerate or self-intersecting"});
        }
    }
    for (const auto& inter : net.intersections) {
        for (const auto id : inter.segment_ids) {
            if (!net.find_segment(id)) {
                issues.push_back({IssueKind::dangling_way_ref, id,
                                  "intersection references missing segment"});
            }
        }
    }
    for (const auto& seg : net.segments) {
        for (const auto& p : seg.centerline) {
            if (!net.bounds.contains(p)) {
                issues.push_back({IssueKind::degenerate_way, seg.id,
                                  "segment extends outside world bounds"});
                break;
            }
        }
    }
    return issues;
}

}  // namespace lindensim
