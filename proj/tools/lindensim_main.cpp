#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lindensim/bridge.hpp"
#include "lindensim/io.hpp"
#include "lindensim/osm.hpp"
#include "lindensim/scenario.hpp"
#include "lindensim/sensors.hpp"
#include "lindensim/world.hpp"

using nlohmann::json;
using namespace lindensim;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

std::string json_text(const json& j) { return j.dump(2) + "\n"; }

RoadNetwork load_network(const std::string& path) {
    return network_from_json(json::parse(read_file(path)));
}

/// Resolve a scenario's file references into a ready-to-run context.
struct LoadedScenario {
    ScenarioSpec spec;
    RoadNetwork network;
    StaticWorld world;
    Route route;
    NdtMap ndt_map;
    ScenarioContext ctx;
};

LoadedScenario load_scenario(const std::string& path) {
    LoadedScenario ls;
    ls.spec = scenario_from_json(json::parse(read_file(path)));
    ls.network = load_network(ls.spec.map_path);
    ls.world = compile_world(ls.network);
    ls.route = route_from_csv(read_file(ls.spec.route_path));
    ls.ctx.network = &ls.network;
    ls.ctx.world = &ls.world;
    ls.ctx.route = ls.route;
    if (ls.spec.use_localization) {
        ls.ndt_map = ndt_map_from_json(json::parse(read_file(ls.spec.ndt_map_path)));
        ls.ctx.ndt_map = &ls.ndt_map;
    }
    return ls;
}

int cmd_ingest(const std::string& osm_path, const std::string& out_path, double ref_lat,
               double ref_lon, bool have_ref) {
    const OsmDocument doc = parse_osm(read_file(osm_path));
    Projection proj;
    if (have_ref) {
        proj.ref_lat = ref_lat;
        proj.ref_lon = ref_lon;
    } else if (!doc.nodes.empty()) {
        proj.ref_lat = doc.nodes.front().lat;
        proj.ref_lon = doc.nodes.front().lon;
    }
    const RoadNetwork net = build_network(doc, proj);
    const auto issues = validate_network(net);
    for (const auto& issue : issues)
        std::cout << to_string(issue.kind) << " (id " << issue.subject_id
                  << "): " << issue.message << "\n";
    write_file(out_path, json_text(network_to_json(net)));
    std::cout << "wrote " << out_path << ": " << net.segments.size() << " segments, "
              << net.intersections.size() << " intersections, " << issues.size()
              << " issues\n";
    return issues.empty() ? 0 : 1;
}

int cmd_record_route(const std::string& net_path, const std::string& out_path, int lane_index,
                     double speed, double spacing) {
    const RoadNetwork net = load_network(net_path);
    const StaticWorld world = compile_world(net);
    if (lane_index < 0 || lane_index >= static_cast<int>(world.lane_paths.size()))
        throw std::runtime_error("lane path index out of range (have " +
                                 std::to_string(world.lane_paths.size()) + ")");
    const Polyline& path = world.lane_paths[lane_index].path;
    std::vector<Pose2> poses;
    std::vector<double> speeds;
    for (double s = 0.0; s <= path.length(); s += spacing * 0.5) {
        const Vec2 p = path.sample(s);
        const Vec2 t = path.tangent(s);
        poses.push_back({p.x, p.y, std::atan2(t.y, t.x)});
        speeds.push_back(speed);
    }
    const Route route = record_route(poses, speeds, spacing);
    write_file(out_path, route_to_csv(route));
    std::cout << "wrote " << out_path << ": " << route.waypoints().size() << " waypoints, "
              << route.length() << " m\n";
    return 0;
}

int cmd_build_map(const std::string& net_path, const std::string& route_path,
                  const std::string& out_path) {
    const RoadNetwork net = load_network(net_path);
    const StaticWorld world = compile_world(net);
    const Route route = route_from_csv(read_file(route_path));

    // ideal mapping drive: noiseless panoramic scans every few meters
    LidarConfig lidar;
    Rng rng(1);
    std::vector<std::pair<PointCloud, Pose2>> scans;
    for (double s = 0.0; s <= route.length(); s += 3.0) {
        const Vec2 p = route.sample(s);
        const Vec2 t = route.tangent(s);
        const Pose2 pose{p.x, p.y, std::atan2(t.y, t.x)};
        scans.push_back({scan_lidar(world, {}, pose, lidar, {}, rng), pose});
    }
    const NdtMap map = build_ndt_map(scans);
    write_file(out_path, json_text(ndt_map_to_json(map)));
    std::cout << "wrote " << out_path << ": " << map.cells.size() << " cells from "
              << scans.size() << " scans\n";
    return 0;
}

int cmd_run(const std::string& scenario_path, const std::string& out_dir) {
    LoadedScenario ls = load_scenario(scenario_path);

    std::filesystem::create_directories(out_dir);
    std::ofstream trace_file(out_dir + "/trace.jsonl", std::ios::binary);
    if (!trace_file) throw std::runtime_error("cannot write " + out_dir + "/trace.jsonl");
    TraceWriter writer(trace_file);
    const ScenarioOutcome outcome = run_scenario(
        ls.spec, ls.ctx, [&writer](const TraceRecord& rec) { writer.write(rec); });
    const json outcome_json = outcome_to_json(outcome);
    writer.finish(outcome_json);
    trace_file.close();

    write_file(out_dir + "/outcome.json", json_text(outcome_json));
    std::cout << outcome_json.dump(2) << "\n";
    return 0;
}

int cmd_replay(const std::string& trace_path) {
    const ReplayResult res = replay_trace(read_file(trace_path));
    std::cout << "hash: " << (res.hash_ok ? "ok" : "MISMATCH") << "\n";
    std::cout << "metrics: " << (res.metrics_match ? "match" : "MISMATCH") << "\n";
    std::cout << res.derived_metrics.dump(2) << "\n";
    return res.hash_ok && res.metrics_match ? 0 : 2;
}

int cmd_serve(const std::string& scenario_path, int port) {
    LoadedScenario ls = load_scenario(scenario_path);
    std::cerr << "listening on port " << port << "\n";
    const BridgeResult res = bridge_serve(ls.spec, ls.ctx, port);
    json out = outcome_to_json(res.outcome);
    out["completed"] = res.completed;
    out["commands"] = res.commands;
    if (!res.error.empty()) out["error"] = res.error;
    std::cout << out.dump(2) << "\n";
    return res.completed ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic shuttle-route simulation and autonomy testbed"};
    app.require_subcommand(1);

    std::string osm_path, net_path, route_path, scenario_path, trace_path, out_path, out_dir;
    double ref_lat = 0.0, ref_lon = 0.0;
    int lane_index = 0, port = 7001;
    double speed = 5.0, spacing = 1.0;

    auto* ingest = app.add_subcommand("ingest", "parse OSM XML into a road network");
    ingest->add_option("osm", osm_path, "input .osm file")->required();
    ingest->add_option("-o,--output", out_path, "network JSON output")->required();
    auto* lat_opt = ingest->add_option("--ref-lat", ref_lat, "projection reference latitude");
    ingest->add_option("--ref-lon", ref_lon, "projection reference longitude")->needs(lat_opt);

    auto* record = app.add_subcommand("record-route", "record a route along a lane path");
    record->add_option("network", net_path, "network JSON")->required();
    record->add_option("-o,--output", out_path, "route CSV output")->required();
    record->add_option("--lane-path", lane_index, "lane path index");
    record->add_option("--speed", speed, "target speed, m/s");
    record->add_option("--spacing", spacing, "waypoint spacing, m");

    auto* build = app.add_subcommand("build-map", "drive a route and build the NDT map");
    build->add_option("network", net_path, "network JSON")->required();
    build->add_option("route", route_path, "route CSV")->required();
    build->add_option("-o,--output", out_path, "NDT map JSON output")->required();

    auto* run = app.add_subcommand("run", "run a scenario");
    run->add_option("scenario", scenario_path, "scenario JSON")->required();
    run->add_option("-o,--outdir", out_dir, "output directory")->required();

    auto* replay = app.add_subcommand("replay", "re-derive metrics from a trace");
    replay->add_option("trace", trace_path, "trace JSONL")->required();

    auto* serve = app.add_subcommand("serve", "serve a scenario over the lockstep bridge");
    serve->add_option("scenario", scenario_path, "scenario JSON")->required();
    serve->add_option("--port", port, "TCP port");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 64;
    }

    try {
        if (ingest->parsed())
            return cmd_ingest(osm_path, out_path, ref_lat, ref_lon, lat_opt->count() > 0);
        if (record->parsed())
            return cmd_record_route(net_path, out_path, lane_index, speed, spacing);
        if (build->parsed()) return cmd_build_map(net_path, route_path, out_path);
        if (run->parsed()) return cmd_run(scenario_path, out_dir);
        if (replay->parsed()) return cmd_replay(trace_path);
        if (serve->parsed()) return cmd_serve(scenario_path, port);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 64;
}
