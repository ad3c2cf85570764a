#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "lindensim/io.hpp"
#include "lindensim/ndt.hpp"
#include "lindensim/scenario.hpp"
#include "test_support.hpp"

using namespace lindensim;
using nlohmann::json;

namespace {

RoadNetwork sample_network() {
    RoadNetwork net = testing::crossroads_network(40.0);
    net.projection = {40.0, -83.0, 6371000.0};
    net.stop_lines.push_back({1, 35.0});
    net.crosswalks.push_back({2, 50.0, 3.0});
    net.buildings.push_back({{10.0, 10.0}, {20.0, 10.0}, {20.0, 20.0}, {10.0, 20.0}});
    net.build_issues.push_back({IssueKind::missing_lane_count, 1, "lanes tag absent"});
    return net;
}

}  // namespace

TEST_CASE("network JSON survives write-read-write byte-identically") {
    const RoadNetwork net = sample_network();
    const json j1 = network_to_json(net);
    const RoadNetwork back = network_from_json(j1);
    const json j2 = network_to_json(back);
    CHECK(j1.dump() == j2.dump());

    CHECK(back.segments.size() == 2);
    CHECK(back.segments[0].id == 1);
    CHECK(back.intersections.size() == 1);
    CHECK(back.intersections[0].control == IntersectionControl::stop_sign);
    CHECK(back.stop_lines.size() == 1);
    CHECK(back.crosswalks[0].width == 3.0);
    CHECK(back.buildings.size() == 1);
    CHECK(back.build_issues[0].kind == IssueKind::missing_lane_count);
    CHECK(back.projection.ref_lat == 40.0);
    // bounds are recomputed on load
    CHECK(back.bounds.min.x == -40.0);
    CHECK(back.bounds.max.y == 40.0);
}

TEST_CASE("network JSON rejects missing or wrong format_version") {
    json j = network_to_json(sample_network());
    j.erase("format_version");
    CHECK_THROWS_AS(network_from_json(j), std::runtime_error);
    j["format_version"] = 99;
    CHECK_THROWS_AS(network_from_json(j), std::runtime_error);
}

TEST_CASE("NDT map JSON round trip preserves cells and statistics") {
    const StaticWorld world = testing::street_world(40.0);
    LidarConfig lidar;
    Rng rng(7);
    std::vector<std::pair<PointCloud, Pose2>> scans;
    for (double x = 0.0; x <= 40.0; x += 5.0) {
        const Pose2 pose{x, 0.0, 0.0};
        scans.push_back({scan_lidar(world, {}, pose, lidar, {}, rng), pose});
    }
    const NdtMap map = build_ndt_map(scans);
    REQUIRE(!map.cells.empty());

    const json j1 = ndt_map_to_json(map);
    const NdtMap back = ndt_map_from_json(j1);
    const json j2 = ndt_map_to_json(back);
    CHECK(j1.dump() == j2.dump());

    CHECK(back.cell_size == map.cell_size);
    CHECK(back.cells.size() == map.cells.size());
    for (const auto& [key, cell] : map.cells) {
        const auto it = back.cells.find(key);
        REQUIRE(it != back.cells.end());
        CHECK(it->second.count == cell.count);
        CHECK(it->second.mean == cell.mean);
        // (1,0) is reconstructed from the stored (0,1), so compare per entry
        CHECK(it->second.covariance(0, 0) == cell.covariance(0, 0));
        CHECK(it->second.covariance(0, 1) == cell.covariance(0, 1));
        CHECK(it->second.covariance(1, 1) == cell.covariance(1, 1));
        // inverse is recomputed, not stored
        const Eigen::Matrix2d prod = it->second.covariance * it->second.inv_covariance;
        CHECK(std::abs(prod(0, 0) - 1.0) < 1e-9);
        CHECK(std::abs(prod(0, 1)) < 1e-9);
    }
}

TEST_CASE("route CSV round trips exactly, including awkward doubles") {
    std::vector<Waypoint> wps;
    for (int i = 0; i < 30; ++i)
        wps.push_back({{0.1 * i, std::sin(0.3 * i), 0.01 * i - 0.1}, 2.0 + i / 7.0});
    const Route route(wps, false);

    const std::string csv1 = route_to_csv(route);
    const Route back = route_from_csv(csv1);
    CHECK(route_to_csv(back) == csv1);
    REQUIRE(back.waypoints().size() == wps.size());
    for (std::size_t i = 0; i < wps.size(); ++i) {
        CHECK(back.waypoints()[i].pose.x == wps[i].pose.x);
        CHECK(back.waypoints()[i].pose.yaw == wps[i].pose.yaw);
        CHECK(back.waypoints()[i].target_speed == wps[i].target_speed);
    }
    CHECK_FALSE(back.cyclic());
}

TEST_CASE("cyclic routes repeat the first waypoint as the final CSV row") {
    std::vector<Waypoint> square = {{{0, 0, 0}, 2},
                                    {{10, 0, M_PI_2}, 2},
                                    {{10, 10, M_PI}, 2},
                                    {{0, 10, -M_PI_2}, 2}};
    const Route route(square, true);
    const std::string csv = route_to_csv(route);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);  // header + 4 + repeat

    const Route back = route_from_csv(csv);
    CHECK(back.cyclic());
    CHECK(back.waypoints().size() == 4);
    CHECK(route_to_csv(back) == csv);
}

TEST_CASE("route CSV rejects malformed input") {
    CHECK_THROWS_WITH_AS(route_from_csv("a,b,c\n1,2,3,4\n"), doctest::Contains("header"),
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(route_from_csv("x,y,yaw,speed\n1,2,3\n"), doctest::Contains("line 2"),
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(route_from_csv("x,y,yaw,speed\n1,2,zz,4\n"), doctest::Contains("zz"),
                         std::runtime_error);
    CHECK_THROWS_AS(route_from_csv("x,y,yaw,speed\n1,2,3,4\n"), RouteTooShortError);
}

TEST_CASE("GeoJSON overlays carry centerlines, buildings, and lane paths") {
    const RoadNetwork net = sample_network();
    const json gj = network_geojson(net);
    CHECK(gj.at("type") == "FeatureCollection");
    int centerlines = 0, buildings = 0;
    for (const auto& f : gj.at("features")) {
        const std::string kind = f.at("properties").at("kind").get<std::string>();
        if (kind == "centerline") ++centerlines;
        if (kind == "building") {
            ++buildings;
            const auto& ring = f.at("geometry").at("coordinates").at(0);
            CHECK(ring.front() == ring.back());  // GeoJSON rings close explicitly
        }
    }
    CHECK(centerlines == 2);
    CHECK(buildings == 1);

    const json wj = world_geojson(compile_world(net));
    int lanes = 0;
    for (const auto& f : wj.at("features"))
        if (f.at("properties").at("kind") == "lane_path") ++lanes;
    CHECK(lanes == 4);
}

TEST_CASE("fnv1a matches the published 64-bit test vectors") {
    CHECK(fnv1a_bytes("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a_bytes("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a_bytes("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("scenario JSON survives write-read-write byte-identically") {
    ScenarioSpec spec;
    spec.name = "circle-3npc";
    spec.kind = ScenarioKind::traffic_circle;
    spec.seed = 42;
    spec.weather.condition = WeatherCondition::rain;
    spec.weather.friction_factor = 0.7;
    spec.npc_spawns.push_back({2, 1.0, 5.0, 3.0, 6.0, false, std::nullopt});
    spec.npc_spawns.push_back({3, 0.0, 0.0, 0.0, 0.0, true, 60.0});
    spec.ped_spawns.push_back({0, 2.0, 8.0, 1.0, 1.5});
    spec.smart_circle_enabled = true;
    spec.smart_circle_center = {1.5, -2.5};
    spec.smart_circle_radius = 30.0;
    spec.map_path = "net.json";
    spec.route_path = "route.csv";

    const json j1 = scenario_to_json(spec);
    const ScenarioSpec back = scenario_from_json(j1);
    CHECK(scenario_to_json(back).dump() == j1.dump());
    CHECK(back.kind == ScenarioKind::traffic_circle);
    CHECK(back.npc_spawns[1].spawn_at == 60.0);
    CHECK(back.npc_spawns[1].erratic);
    CHECK_FALSE(back.npc_spawns[0].spawn_at.has_value());
}

TEST_CASE("outcome JSON round trips through outcome_from_json") {
    ScenarioOutcome o;
    o.finished = true;
    o.finish_time = 31.74;
    o.max_cross_track_error = 0.21;
    o.min_clearance = 1.8;
    o.collision_count = 1;
    o.emergency_brake_count = 2;
    o.ticks = 1587;
    const json j = outcome_to_json(o);
    const ScenarioOutcome back = outcome_from_json(j);
    CHECK(outcome_to_json(back).dump() == j.dump());

    ScenarioOutcome timeout;  // finish_time and min_clearance become null
    const json jt = outcome_to_json(timeout);
    CHECK(jt.at("finish_time").is_null());
    CHECK(jt.at("min_clearance").is_null());
    CHECK(outcome_to_json(outcome_from_json(jt)).dump() == jt.dump());
}

TEST_CASE("trace writer appends a hashed outcome record that replay verifies") {
    std::ostringstream out;
    TraceWriter writer(out);

    ScenarioOutcome truth;
    truth.ticks = 3;
    const auto ego = [](double cte, double clearance, bool eb) {
        return json{{"x", 0.0}, {"y", 0.0},        {"yaw", 0.0},
                    {"speed", 1.0}, {"cte", cte},  {"clearance", clearance},
                    {"eb", eb}};
    };
    writer.write({0, 0.0, "ego", ego(0.02, 5.0, false)});
    writer.write({1, 0.02, "ego", ego(-0.31, 2.5, true)});
    writer.write({1, 0.02, "event",
                  {{"type", "collision"}, {"a", 0}, {"b", 3}, {"note", ""}}});
    writer.write({2, 0.04, "ego", ego(0.10, 4.0, true)});
    writer.write({2, 0.04, "event", {{"type", "finish"}, {"a", 0}, {"b", -1}, {"note", ""}}});
    truth.max_cross_track_error = 0.31;
    truth.min_clearance = 2.5;
    truth.collision_count = 1;
    truth.emergency_brake_count = 1;  // one onset across the eb sequence
    truth.finished = true;
    truth.finish_time = 0.04;
    writer.finish(outcome_to_json(truth));

    const std::string text = out.str();
    const ReplayResult res = replay_trace(text);
    CHECK(res.hash_ok);
    CHECK(res.metrics_match);
    CHECK(res.derived_metrics == res.recorded_metrics);
    CHECK(res.derived_metrics.at("max_cross_track_error").get<double>() == 0.31);

    SUBCASE("a flipped byte breaks the hash") {
        std::string tampered = text;
        const auto pos = tampered.find("0.02");
        tampered[pos] = '1';
        CHECK_FALSE(replay_trace(tampered).hash_ok);
    }
    SUBCASE("an outcome that disagrees with the records is flagged") {
        std::ostringstream out2;
        TraceWriter w2(out2);
        w2.write({0, 0.0, "ego", ego(0.02, 5.0, false)});
        ScenarioOutcome wrong = truth;
        wrong.collision_count = 7;
        w2.finish(outcome_to_json(wrong));
        const ReplayResult r2 = replay_trace(out2.str());
        CHECK(r2.hash_ok);
        CHECK_FALSE(r2.metrics_match);
    }
}

TEST_CASE("trace writer refuses writes after finish") {
    std::ostringstream out;
    TraceWriter writer(out);
    writer.write({0, 0.0, "ego", json::object()});
    writer.finish(json::object());
    CHECK_THROWS_AS(writer.write({1, 0.02, "ego", json::object()}), std::logic_error);
    CHECK_THROWS_AS(writer.finish(json::object()), std::logic_error);
}
