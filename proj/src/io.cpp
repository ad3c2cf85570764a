#include "lindensim/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "lindensim/scenario.hpp"

namespace lindensim {

using nlohmann::json;

namespace {

std::string fmt_double(double v) {
    char buf[32];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw std::runtime_error("double formatting failed");
    return std::string(buf, end);
}

double parse_double(std::string_view s) {
    double v = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size())
        throw std::runtime_error("bad number in CSV: '" + std::string(s) + "'");
    return v;
}

json vec2_json(const Vec2& v) { return json::array({v.x, v.y}); }
Vec2 vec2_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

void require_version(const json& j, const char* what) {
    if (!j.contains("format_version") || j["format_version"].get<int>() != kFormatVersion)
        throw std::runtime_error(std::string(what) + ": unsupported or missing format_version");
}

}  // namespace

// ---- road network ----

json network_to_json(const RoadNetwork& net) {
    json j;
    j["format_version"] = kFormatVersion;
    j["projection"] = {{"ref_lat", net.projection.ref_lat},
                       {"ref_lon", net.projection.ref_lon},
                       {"earth_radius", net.projection.earth_radius}};

    json segments = json::array();
    for (const auto& seg : net.segments) {
        json centerline = json::array();
        for (const auto& p : seg.centerline) centerline.push_back(vec2_json(p));
        segments.push_back({{"id", seg.id},
                            {"centerline", std::move(centerline)},
                            {"lane_count", seg.lane_count},
                            {"speed_limit", seg.speed_limit},
                            {"oneway", seg.oneway}});
    }
    j["segments"] = std::move(segments);

    json intersections = json::array();
    for (const auto& in : net.intersections) {
        const char* control = in.control == IntersectionControl::stop_sign ? "stop_sign"
                              : in.control == IntersectionControl::circle  ? "circle"
                                                                           : "none";
        intersections.push_back({{"position", vec2_json(in.position)},
                                 {"segment_ids", in.segment_ids},
                                 {"control", control}});
    }
    j["intersections"] = std::move(intersections);

    json stop_lines = json::array();
    for (const auto& sl : net.stop_lines)
        stop_lines.push_back({{"segment_id", sl.segment_id}, {"arclength", sl.arclength}});
    j["stop_lines"] = std::move(stop_lines);

    json crosswalks = json::array();
    for (const auto& cw : net.crosswalks)
        crosswalks.push_back(
            {{"segment_id", cw.segment_id}, {"arclength", cw.arclength}, {"width", cw.width}});
    j["crosswalks"] = std::move(crosswalks);

    json buildings = json::array();
    for (const auto& poly : net.buildings) {
        json ring = json::array();
        for (const auto& p : poly) ring.push_back(vec2_json(p));
        buildings.push_back(std::move(ring));
    }
    j["buildings"] = std::move(buildings);

    json issues = json::array();
    for (const auto& issue : net.build_issues)
        issues.push_back({{"kind", to_string(issue.kind)},
                          {"subject_id", issue.subject_id},
                          {"message", issue.message}});
    j["build_issues"] = std::move(issues);
    return j;
}

RoadNetwork network_from_json(const json& j) {
    require_version(j, "network");
    RoadNetwork net;
    const auto& proj = j.at("projection");
    net.projection = {proj.at("ref_lat").get<double>(), proj.at("ref_lon").get<double>(),
                      proj.at("earth_radius").get<double>()};

    for (const auto& s : j.at("segments")) {
        RoadSegment seg;
        seg.id = s.at("id").get<std::int64_t>();
        for (const auto& p : s.at("centerline")) seg.centerline.push_back(vec2_from(p));
        seg.lane_count = s.at("lane_count").get<int>();
        seg.speed_limit = s.at("speed_limit").get<double>();
        seg.oneway = s.at("oneway").get<bool>();
        for (const auto& p : seg.centerline) net.bounds.expand(p);
        net.segments.push_back(std::move(seg));
    }
    for (const auto& in : j.at("intersections")) {
        Intersection x;
        x.position = vec2_from(in.at("position"));
        x.segment_ids = in.at("segment_ids").get<std::vector<std::int64_t>>();
        const std::string c = in.at("control").get<std::string>();
        x.control = c == "stop_sign" ? IntersectionControl::stop_sign
                    : c == "circle"  ? IntersectionControl::circle
                                     : IntersectionControl::none;
        net.intersections.push_back(std::move(x));
    }
    for (const auto& sl : j.at("stop_lines"))
        net.stop_lines.push_back(
            {sl.at("segment_id").get<std::int64_t>(), sl.at("arclength").get<double>()});
    for (const auto& cw : j.at("crosswalks"))
        net.crosswalks.push_back({cw.at("segment_id").get<std::int64_t>(),
                                  cw.at("arclength").get<double>(), cw.at("width").get<double>()});
    for (const auto& ring : j.at("buildings")) {
        std::vector<Vec2> poly;
        for (const auto& p : ring) poly.push_back(vec2_from(p));
        for (const auto& p : poly) net.bounds.expand(p);
        net.buildings.push_back(std::move(poly));
    }
    for (const auto& issue : j.at("build_issues"))
        net.build_issues.push_back({issue_kind_from_string(issue.at("kind").get<std::string>()),
                                    issue.at("subject_id").get<std::int64_t>(),
                                    issue.at("message").get<std::string>()});
    return net;
}

// ---- NDT map ----

json ndt_map_to_json(const NdtMap& map) {
    json j;
    j["format_version"] = kFormatVersion;
    j["cell_size"] = map.cell_size;
    j["origin"] = vec2_json(map.origin);

    std::vector<std::int64_t> keys;
    keys.reserve(map.cells.size());
    for (const auto& [key, cell] : map.cells) keys.push_back(key);
    std::sort(keys.begin(), keys.end());

    json cells = json::array();
    for (const auto key : keys) {
        const auto [ix, iy] = NdtMap::unpack(key);
        const NdtCell& cell = map.cells.at(key);
        cells.push_back({{"ix", ix},
                         {"iy", iy},
                         {"count", cell.count},
                         {"mean", json::array({cell.mean.x(), cell.mean.y()})},
                         {"cov", json::array({cell.covariance(0, 0), cell.covariance(0, 1),
                                              cell.covariance(1, 1)})}});
    }
    j["cells"] = std::move(cells);
    return j;
}

NdtMap ndt_map_from_json(const json& j) {
    require_version(j, "ndt map");
    NdtMap map;
    map.cell_size = j.at("cell_size").get<double>();
    map.origin = vec2_from(j.at("origin"));
    for (const auto& c : j.at("cells")) {
        NdtCell cell;
        cell.count = c.at("count").get<int>();
        cell.mean << c.at("mean").at(0).get<double>(), c.at("mean").at(1).get<double>();
        const double xx = c.at("cov").at(0).get<double>();
        const double xy = c.at("cov").at(1).get<double>();
        const double yy = c.at("cov").at(2).get<double>();
        cell.covariance << xx, xy, xy, yy;
        cell.inv_covariance = cell.covariance.inverse();
        map.cells.emplace(NdtMap::pack(c.at("ix").get<std::int32_t>(),
                                       c.at("iy").get<std::int32_t>()),
                          std::move(cell));
    }
    return map;
}

// ---- route CSV ----

std::string route_to_csv(const Route& route) {
    std::string out = "x,y,yaw,speed\n";
    auto row = [&out](const Waypoint& wp) {
        out += fmt_double(wp.pose.x);
        out += ',';
        out += fmt_double(wp.pose.y);
        out += ',';
        out += fmt_double(wp.pose.yaw);
        out += ',';
        out += fmt_double(wp.target_speed);
        out += '\n';
    };
    for (const auto& wp : route.waypoints()) row(wp);
    if (route.cyclic() && !route.waypoints().empty()) row(route.waypoints().front());
    return out;
}

Route route_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "x,y,yaw,speed")
        throw std::runtime_error("route CSV: missing or bad header");

    std::vector<Waypoint> wps;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        double vals[4];
        std::size_t pos = 0;
        for (int k = 0; k < 4; ++k) {
            const std::size_t comma = k < 3 ? line.find(',', pos) : line.size();
            if (comma == std::string::npos)
                throw std::runtime_error("route CSV: short row at line " + std::to_string(line_no));
            vals[k] = parse_double(std::string_view(line).substr(pos, comma - pos));
            pos = comma + 1;
        }
        wps.push_back({{vals[0], vals[1], vals[2]}, vals[3]});
    }
    if (wps.size() < 2) throw RouteTooShortError();

    // a repeated first waypoint marks a cyclic route
    bool cyclic = false;
    if (wps.size() > 2 && wps.front().pose.x == wps.back().pose.x &&
        wps.front().pose.y == wps.back().pose.y && wps.front().pose.yaw == wps.back().pose.yaw) {
        cyclic = true;
        wps.pop_back();
    }
    return Route(std::move(wps), cyclic);
}

// ---- GeoJSON ----

namespace {

json linestring_feature(const std::vector<Vec2>& pts, json properties) {
    json coords = json::array();
    for (const auto& p : pts) coords.push_back(vec2_json(p));
    return {{"type", "Feature"},
            {"properties", std::move(properties)},
            {"geometry", {{"type", "LineString"}, {"coordinates", std::move(coords)}}}};
}

}  // namespace

json network_geojson(const RoadNetwork& net) {
    json features = json::array();
    for (const auto& seg : net.segments)
        features.push_back(linestring_feature(
            seg.centerline, {{"kind", "centerline"}, {"segment_id", seg.id}}));
    for (const auto& poly : net.buildings) {
        json ring = json::array();
        for (const auto& p : poly) ring.push_back(vec2_json(p));
        ring.push_back(vec2_json(poly.front()));  // GeoJSON rings close explicitly
        features.push_back(
            {{"type", "Feature"},
             {"properties", {{"kind", "building"}}},
             {"geometry", {{"type", "Polygon"}, {"coordinates", json::array({std::move(ring)})}}}});
    }
    return {{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

json world_geojson(const StaticWorld& world) {
    json features = json::array();
    for (const auto& seg : world.obstacle_segments)
        features.push_back(
            linestring_feature({seg.a, seg.b}, {{"kind", "obstacle_segment"}}));
    for (const auto& lp : world.lane_paths)
        features.push_back(linestring_feature(lp.path.points(),
                                              {{"kind", "lane_path"},
                                               {"segment_id", lp.segment_id},
                                               {"forward", lp.forward},
                                               {"lane_index", lp.lane_index}}));
    return {{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

// ---- traces ----

std::uint64_t fnv1a_bytes(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (const unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

namespace {

std::string hash_hex(std::uint64_t h) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string record_line(const TraceRecord& rec) {
    const json j = {{"tick", rec.tick}, {"time", rec.time}, {"topic", rec.topic},
                    {"data", rec.payload}};
    return j.dump() + "\n";
}

// FNV-1a over a stream of chunks (must match fnv1a_bytes on the concatenation)
std::uint64_t fnv1a_extend(std::uint64_t h, std::string_view bytes) {
    for (const unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

TraceWriter::TraceWriter(std::ostream& out) : out_(out), hash_(14695981039346656037ull) {}

void TraceWriter::write(const TraceRecord& rec) {
    if (finished_) throw std::logic_error("trace already finished");
    const std::string line = record_line(rec);
    hash_ = fnv1a_extend(hash_, line);
    out_ << line;
}

void TraceWriter::finish(const json& outcome_payload) {
    if (finished_) throw std::logic_error("trace already finished");
    finished_ = true;
    json payload = outcome_payload;
    payload["trace_hash"] = hash_hex(hash_);
    TraceRecord rec;
    rec.topic = "outcome";
    rec.payload = std::move(payload);
    out_ << record_line(rec);
}

ReplayResult replay_trace(const std::string& trace_text) {
    ReplayResult result;

    ScenarioOutcome derived;
    bool prev_eb = false;
    bool any_clearance = false;
    double min_clearance = 1e300;
    std::optional<json> recorded;
    std::uint64_t hash = 14695981039346656037ull;
    std::string recorded_hash;

    std::size_t pos = 0;
    while (pos < trace_text.size()) {
        std::size_t nl = trace_text.find('\n', pos);
        if (nl == std::string::npos) nl = trace_text.size() - 1;
        const std::string_view line(trace_text.data() + pos, nl - pos + 1);
        pos = nl + 1;

        const json j = json::parse(line);
        const std::string topic = j.at("topic").get<std::string>();
        if (topic == "outcome") {
            recorded = j.at("data");
            recorded_hash = recorded->at("trace_hash").get<std::string>();
            break;  // outcome is by contract the final record
        }
        hash = fnv1a_extend(hash, line);

        if (topic == "ego") {
            const json& d = j.at("data");
            derived.ticks += 1;
            derived.max_cross_track_error =
                std::max(derived.max_cross_track_error, std::abs(d.at("cte").get<double>()));
            if (!d.at("clearance").is_null()) {
                any_clearance = true;
                min_clearance = std::min(min_clearance, d.at("clearance").get<double>());
            }
            const bool eb = d.at("eb").get<bool>();
            if (eb && !prev_eb) derived.emergency_brake_count += 1;
            prev_eb = eb;
        } else if (topic == "event") {
            const json& d = j.at("data");
            const std::string type = d.at("type").get<std::string>();
            if (type == "collision") {
                if (d.at("a").get<int>() == kEgoId || d.at("b").get<int>() == kEgoId)
                    derived.collision_count += 1;
            } else if (type == "pause") {
                derived.pause_event_count += 1;
            } else if (type == "localization_loss") {
                derived.localization_loss_count += 1;
            } else if (type == "priority_violation") {
                derived.priority_violation_count += 1;
            } else if (type == "finish") {
                derived.finished = true;
                derived.finish_time = j.at("time").get<double>();
            }
        }
    }
    if (any_clearance) derived.min_clearance = min_clearance;

    result.hash_ok = !recorded_hash.empty() && recorded_hash == hash_hex(hash);
    result.derived_metrics = outcome_to_json(derived);
    if (recorded) {
        json rec = *recorded;
        rec.erase("trace_hash");
        result.recorded_metrics = rec;
        result.metrics_match = rec == result.derived_metrics;
    }
    return result;
}

}  // namespace lindensim
