#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "lindensim/osm.hpp"
#include "lindensim/road_network.hpp"

using namespace lindensim;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::string kFixture = std::string(FIXTURE_DIR) + "/linden_min.osm";

}  // namespace

TEST_CASE("parse_osm: fixture element counts and tags") {
    const OsmDocument doc = parse_osm(read_file(kFixture));
    CHECK(doc.nodes.size() == 9);
    CHECK(doc.ways.size() == 3);

    const OsmNode* stop = doc.find_node(2);
    REQUIRE(stop != nullptr);
    CHECK(stop->tags.at("highway") == "stop");

    REQUIRE(doc.ways[0].id == 100);
    CHECK(doc.ways[0].tags.at("highway") == "residential");
    CHECK(doc.ways[0].tags.at("name") == "North Fourth Street");  // unknown tag preserved
    CHECK(doc.ways[0].node_refs == std::vector<std::int64_t>{1, 2, 3});
}

TEST_CASE("parse_osm: empty root") {
    const OsmDocument doc = parse_osm("<osm/>");
    CHECK(doc.nodes.empty());
    CHECK(doc.ways.empty());
}

TEST_CASE("parse_osm: dangling node reference") {
    const std::string xml = R"(<osm>
<node id="1" lat="0" lon="0"/>
<way id="10"><nd ref="1"/><nd ref="999"/><tag k="highway" v="residential"/></way>
</osm>)";
    try {
        parse_osm(xml);
        FAIL("expected DanglingReferenceError");
    } catch (const DanglingReferenceError& e) {
        REQUIRE(e.missing_ids.size() == 1);
        CHECK(e.missing_ids[0] == 999);
    }
}

TEST_CASE("parse_osm: malformed XML reports the line") {
    const std::string xml = "<osm>\n<node id=\"1\" lat=0 lon=\"0\"/>\n</osm>";
    try {
        parse_osm(xml);
        FAIL("expected OsmParseError");
    } catch (const OsmParseError& e) {
        CHECK(e.line_number == 2);
    }
}

TEST_CASE("parse_osm: entity decoding") {
    const OsmDocument doc =
        parse_osm(R"(<osm><node id="1" lat="0" lon="0"><tag k="name" v="A &amp; B"/></node></osm>)");
    CHECK(doc.nodes[0].tags.at("name") == "A & B");
}

TEST_CASE("projection: reference point, formula values, round trip") {
    const Projection proj{40.0, -83.0};

    const Vec2 origin = project(40.0, -83.0, proj);
    CHECK(origin.x == doctest::Approx(0.0));
    CHECK(origin.y == doctest::Approx(0.0));

    // independent evaluation of the projection formulas
    const double y_expect = 6371000.0 * 0.001 * M_PI / 180.0;  // ~111.194 m
    const Vec2 north = project(40.001, -83.0, proj);
    CHECK(north.y == doctest::Approx(y_expect).epsilon(1e-9));
    CHECK(north.x == doctest::Approx(0.0));

    const double x_expect = y_expect * std::cos(40.0 * M_PI / 180.0);  // ~85.180 m
    const Vec2 east = project(40.0, -82.999, proj);
    CHECK(east.x == doctest::Approx(x_expect).epsilon(1e-9));
    CHECK(north.y > origin.y);  // y strictly increasing in lat

    const auto [lat, lon] = unproject(project(40.0123, -82.9876, proj), proj);
    CHECK(lat == doctest::Approx(40.0123).epsilon(1e-12));
    CHECK(lon == doctest::Approx(-82.9876).epsilon(1e-12));

    CHECK_THROWS_AS(project(91.0, 0.0, proj), std::domain_error);
    CHECK_THROWS_AS(project(0.0, 181.0, proj), std::domain_error);
}

TEST_CASE("build_network: fixture network") {
    const OsmDocument doc = parse_osm(read_file(kFixture));
    const Projection proj{40.0, -83.0};
    const RoadNetwork net = build_network(doc, proj);

    REQUIRE(net.segments.size() == 2);
    const RoadSegment* main = net.find_segment(100);
    REQUIRE(main != nullptr);

    // segment 100 spans 0.0002 deg of latitude; oracle from the projection formula
    const double expect_len = 6371000.0 * 0.0002 * M_PI / 180.0;
    double len = 0.0;
    for (std::size_t i = 0; i + 1 < main->centerline.size(); ++i)
        len += (main->centerline[i + 1] - main->centerline[i]).norm();
    CHECK(std::abs(len - expect_len) < 1e-6);

    // lanes=2 two-way -> 1 per direction; maxspeed "25 mph"
    CHECK(main->lane_count == 1);
    CHECK(main->speed_limit == doctest::Approx(25.0 * 0.44704));
    CHECK_FALSE(main->oneway);

    // node 3 shared by ways 100 and 101
    REQUIRE(net.intersections.size() == 1);
    CHECK(net.intersections[0].segment_ids.size() == 2);
    CHECK(net.intersections[0].control == IntersectionControl::none);

    // stop node 2 sits mid-way on way 100
    REQUIRE(net.stop_lines.size() == 1);
    CHECK(net.stop_lines[0].segment_id == 100);
    CHECK(net.stop_lines[0].arclength == doctest::Approx(expect_len / 2.0));

    REQUIRE(net.crosswalks.size() == 1);
    CHECK(net.crosswalks[0].segment_id == 101);

    REQUIRE(net.buildings.size() == 1);
    CHECK(net.buildings[0].size() == 4);

    // fully tagged fixture: no issues
    CHECK(validate_network(net).empty());
}

TEST_CASE("build_network: tag defaults emit issues") {
    const std::string xml = R"(<osm>
<node id="1" lat="40.0" lon="-83.0"/>
<node id="2" lat="40.001" lon="-83.0"/>
<way id="5"><nd ref="1"/><nd ref="2"/><tag k="highway" v="residential"/></way>
</osm>)";
    const RoadNetwork net = build_network(parse_osm(xml), Projection{40.0, -83.0});
    REQUIRE(net.segments.size() == 1);
    CHECK(net.segments[0].lane_count == 1);
    CHECK(net.segments[0].speed_limit == doctest::Approx(11.18));

    const auto issues = validate_network(net);
    REQUIRE(issues.size() == 2);
    bool has_lane = false, has_speed = false;
    for (const auto& issue : issues) {
        if (issue.kind == IssueKind::missing_lane_count && issue.subject_id == 5) has_lane = true;
        if (issue.kind == IssueKind::missing_speed_limit && issue.subject_id == 5) has_speed = true;
    }
    CHECK(has_lane);
    CHECK(has_speed);
}

TEST_CASE("build_network: oneway, kph maxspeed, roundabout") {
    const std::string xml = R"(<osm>
<node id="1" lat="40.0" lon="-83.0"/>
<node id="2" lat="40.0005" lon="-83.0"/>
<node id="3" lat="40.0005" lon="-82.9995"/>
<way id="7">
  <nd ref="1"/><nd ref="2"/>
  <tag k="highway" v="residential"/><tag k="oneway" v="yes"/>
  <tag k="lanes" v="2"/><tag k="maxspeed" v="36"/>
</way>
<way id="8">
  <nd ref="2"/><nd ref="3"/>
  <tag k="highway" v="residential"/><tag k="junction" v="roundabout"/>
  <tag k="lanes" v="1"/><tag k="maxspeed" v="18"/>
</way>
</osm>)";
    const RoadNetwork net = build_network(parse_osm(xml), Projection{40.0, -83.0});
    const RoadSegment* s7 = net.find_segment(7);
    REQUIRE(s7 != nullptr);
    CHECK(s7->oneway);
    CHECK(s7->lane_count == 2);  // oneway keeps full lane count in one direction
    CHECK(s7->speed_limit == doctest::Approx(10.0));  // 36 km/h

    const RoadSegment* s8 = net.find_segment(8);
    REQUIRE(s8 != nullptr);
    CHECK(s8->oneway);  // roundabouts are implicitly oneway

    REQUIRE(net.intersections.size() == 1);
    CHECK(net.intersections[0].control == IntersectionControl::circle);
}

TEST_CASE("build_network: zero highway ways") {
    const std::string xml = R"(<osm>
<node id="1" lat="40.0" lon="-83.0"/><node id="2" lat="40.0001" lon="-83.0"/>
<node id="3" lat="40.0001" lon="-82.9999"/>
<way id="9"><nd ref="1"/><nd ref="2"/><nd ref="3"/><nd ref="1"/><tag k="building" v="yes"/></way>
</osm>)";
    CHECK_THROWS_AS(build_network(parse_osm(xml), Projection{40.0, -83.0}), EmptyNetworkError);
}

TEST_CASE("build_network: unclosed building flagged but kept") {
    const std::string xml = R"(<osm>
<node id="1" lat="40.0" lon="-83.0"/><node id="2" lat="40.0001" lon="-83.0"/>
<node id="3" lat="40.0001" lon="-82.9999"/><node id="4" lat="40.0" lon="-82.9999"/>
<node id="20" lat="40.0" lon="-83.0005"/><node id="21" lat="40.0005" lon="-83.0005"/>
<way id="9"><nd ref="1"/><nd ref="2"/><nd ref="3"/><nd ref="4"/><tag k="building" v="yes"/></way>
<way id="10"><nd ref="20"/><nd ref="21"/><tag k="highway" v="residential"/>
  <tag k="lanes" v="1"/><tag k="maxspeed" v="25 mph"/></way>
</osm>)";
    const RoadNetwork net = build_network(parse_osm(xml), Projection{40.0, -83.0});
    REQUIRE(net.buildings.size() == 1);
    bool flagged = false;
    for (const auto& issue : net.build_issues)
        if (issue.kind == IssueKind::unclosed_building && issue.subject_id == 9) flagged = true;
    CHECK(flagged);
}

TEST_CASE("build_network is deterministic") {
    const OsmDocument doc = parse_osm(read_file(kFixture));
    const Projection proj{40.0, -83.0};
    const RoadNetwork a = build_network(doc, proj);
    const RoadNetwork b = build_network(doc, proj);
    REQUIRE(a.segments.size() == b.segments.size());
    for (std::size_t i = 0; i < a.segments.size(); ++i) {
        CHECK(a.segments[i].id == b.segments[i].id);
        REQUIRE(a.segments[i].centerline.size() == b.segments[i].centerline.size());
        for (std::size_t j = 0; j < a.segments[i].centerline.size(); ++j)
            CHECK(a.segments[i].centerline[j] == b.segments[i].centerline[j]);
    }
}
