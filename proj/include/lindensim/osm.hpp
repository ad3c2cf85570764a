#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lindensim/geometry.hpp"

namespace lindensim {

using TagMap = std::map<std::string, std::string>;

struct OsmNode {
    std::int64_t id = 0;
    double lat = 0.0;
    double lon = 0.0;
    TagMap tags;
};

struct OsmWay {
    std::int64_t id = 0;
    std::vector<std::int64_t> node_refs;
    TagMap tags;
};

struct OsmDocument {
    std::vector<OsmNode> nodes;
    std::vector<OsmWay> ways;

    const OsmNode* find_node(std::int64_t id) const;
};

struct OsmParseError : std::runtime_error {
    OsmParseError(const std::string& msg, int line)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_number(line) {}
    int line_number;
};

struct DanglingReferenceError : std::runtime_error {
    DanglingReferenceError(std::string msg, std::vector<std::int64_t> ids)
        : std::runtime_error(std::move(msg)), missing_ids(std::move(ids)) {}
    std::vector<std::int64_t> missing_ids;
};

/// Parse the OSM XML v0.6 element subset (node, way, nd, tag). Unknown elements
/// are skipped; unknown tags are kept verbatim in the tag maps. Throws
/// OsmParseError on malformed XML and DanglingReferenceError when a way
/// references a node absent from the document.
OsmDocument parse_osm(const std::string& xml_text);

/// Equirectangular local tangent plane.
struct Projection {
    double ref_lat = 0.0;   // degrees
    double ref_lon = 0.0;   // degrees
    double earth_radius = 6371000.0;  // meters
};

/// (lat, lon) degrees -> local metric (x, y). Throws std::domain_error when out of range.
Vec2 project(double lat, double lon, const Projection& proj);

/// Inverse of project: local (x, y) -> (lat, lon) degrees.
std::pair<double, double> unproject(const Vec2& p, const Projection& proj);

}  // namespace lindensim
