#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "lindensim/guidance.hpp"
#include "lindensim/ndt.hpp"
#include "lindensim/road_network.hpp"
#include "lindensim/world.hpp"

namespace lindensim {

inline constexpr int kFormatVersion = 1;

// ---- file formats (all carry format_version; round trips are byte-exact) ----

nlohmann::json network_to_json(const RoadNetwork& net);
RoadNetwork network_from_json(const nlohmann::json& j);

nlohmann::json ndt_map_to_json(const NdtMap& map);
NdtMap ndt_map_from_json(const nlohmann::json& j);

/// Route CSV: header `x,y,yaw,speed`, one waypoint per row, shortest-round-trip
/// doubles. Cyclic routes repeat the first waypoint as the final row.
std::string route_to_csv(const Route& route);
Route route_from_csv(const std::string& text);

/// GeoJSON overlays for inspection.
nlohmann::json network_geojson(const RoadNetwork& net);
nlohmann::json world_geojson(const StaticWorld& world);

// ---- traces ----

struct TraceRecord {
    std::int64_t tick = 0;
    double time = 0.0;
    std::string topic;
    nlohmann::json payload;
};

using TraceSink = std::function<void(const TraceRecord&)>;

std::uint64_t fnv1a_bytes(std::string_view bytes);

/// JSONL trace writer. Lines are `{"tick":..,"time":..,"topic":..,"data":..}`;
/// finish() appends a final "outcome" record whose payload carries the metrics
/// plus the FNV-1a hash of every byte written before it.
class TraceWriter {
public:
    explicit TraceWriter(std::ostream& out);
    void write(const TraceRecord& rec);
    void finish(const nlohmann::json& outcome_payload);
    std::uint64_t hash() const { return hash_; }

private:
    std::ostream& out_;
    std::uint64_t hash_;
    bool finished_ = false;
};

struct ReplayResult {
    bool hash_ok = false;
    nlohmann::json recorded_metrics;  // from the trace's outcome record
    nlohmann::json derived_metrics;   // recomputed from the per-tick records
    bool metrics_match = false;
};

/// Re-derive the outcome metrics from a trace and verify its hash.
ReplayResult replay_trace(const std::string& trace_text);

}  // namespace lindensim
