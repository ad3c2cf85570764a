#include "lindensim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "lindensim/sensors.hpp"

namespace lindensim {

using nlohmann::json;

namespace {

// harness tuning; pinned here so runs and their replays agree forever
constexpr double kDetectionRadius = 2.5;   // fused object counts as "this npc"
constexpr double kPauseThreshold = 10.0;   // s stationary before a pause event
constexpr double kZoneStopSetback = 1.0;   // stop this far before the zone disk
constexpr double kCrosswalkSetback = 4.5;  // stop this far before the crossing
constexpr double kArrivalWindow = 1.5;     // stopped within this of the line
constexpr double kNpcHeadway = 8.0;        // center-to-center gap keeping
constexpr double kErraticYield = 8.0;      // extra radius an erratic npc clears
constexpr double kGpsSigma = 0.3;
constexpr double kLidarSigma = 0.02;
constexpr double kDownsampleRadius = 0.2;

}  // namespace

std::string to_string(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::free_run: return "free_run";
        case ScenarioKind::intersection: return "intersection";
        case ScenarioKind::traffic_circle: return "traffic_circle";
        case ScenarioKind::pedestrian_crossing: return "pedestrian_crossing";
        case ScenarioKind::stopped_obstacle: return "stopped_obstacle";
        case ScenarioKind::slow_fleet: return "slow_fleet";
        case ScenarioKind::weather: return "weather";
    }
    return "free_run";
}

ScenarioKind scenario_kind_from_string(const std::string& s) {
    if (s == "free_run") return ScenarioKind::free_run;
    if (s == "intersection") return ScenarioKind::intersection;
    if (s == "traffic_circle") return ScenarioKind::traffic_circle;
    if (s == "pedestrian_crossing") return ScenarioKind::pedestrian_crossing;
    if (s == "stopped_obstacle") return ScenarioKind::stopped_obstacle;
    if (s == "slow_fleet") return ScenarioKind::slow_fleet;
    if (s == "weather") return ScenarioKind::weather;
    throw std::invalid_argument("unknown scenario kind: " + s);
}

json scenario_to_json(const ScenarioSpec& spec) {
    json npcs = json::array();
    for (const auto& n : spec.npc_spawns) {
        json j = {{"lane_path_index", n.lane_path_index},
                  {"entry_time_min", n.entry_time_min},
                  {"entry_time_max", n.entry_time_max},
                  {"speed_min", n.speed_min},
                  {"speed_max", n.speed_max},
                  {"erratic", n.erratic}};
        j["spawn_at"] = n.spawn_at ? json(*n.spawn_at) : json(nullptr);
        npcs.push_back(std::move(j));
    }
    json peds = json::array();
    for (const auto& p : spec.ped_spawns)
        peds.push_back({{"crosswalk_index", p.crosswalk_index},
                        {"start_time_min", p.start_time_min},
                        {"start_time_max", p.start_time_max},
                        {"walk_speed_min", p.walk_speed_min},
                        {"walk_speed_max", p.walk_speed_max}});
    return {{"format_version", kFormatVersion},
            {"name", spec.name},
            {"kind", to_string(spec.kind)},
            {"seed", spec.seed},
            {"duration_limit", spec.duration_limit},
            {"dt", spec.dt},
            {"weather",
             {{"condition", weather_condition_to_string(spec.weather.condition)},
              {"friction_factor", spec.weather.friction_factor},
              {"sensor_noise_scale", spec.weather.sensor_noise_scale},
              {"sensor_dropout_prob", spec.weather.sensor_dropout_prob}}},
            {"npc_spawns", std::move(npcs)},
            {"ped_spawns", std::move(peds)},
            {"smart_circle_enabled", spec.smart_circle_enabled},
            {"smart_circle_center", json::array({spec.smart_circle_center.x,
                                                 spec.smart_circle_center.y})},
            {"smart_circle_radius", spec.smart_circle_radius},
            {"broadcast_interval", spec.broadcast_interval},
            {"use_localization", spec.use_localization},
            {"lidar_period", spec.lidar_period},
            {"lidar_beams", spec.lidar_beams},
            {"conflict_zone_radius", spec.conflict_zone_radius},
            {"map_path", spec.map_path},
            {"route_path", spec.route_path},
            {"ndt_map_path", spec.ndt_map_path}};
}

ScenarioSpec scenario_from_json(const json& j) {
    if (!j.contains("format_version") || j["format_version"].get<int>() != kFormatVersion)
        throw std::runtime_error("scenario: unsupported or missing format_version");
    ScenarioSpec spec;
    spec.name = j.at("name").get<std::string>();
    spec.kind = scenario_kind_from_string(j.at("kind").get<std::string>());
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.duration_limit = j.at("duration_limit").get<double>();
    spec.dt = j.at("dt").get<double>();
    const auto& w = j.at("weather");
    spec.weather.condition = weather_condition_from_string(w.at("condition").get<std::string>());
    spec.weather.friction_factor = w.at("friction_factor").get<double>();
    spec.weather.sensor_noise_scale = w.at("sensor_noise_scale").get<double>();
    spec.weather.sensor_dropout_prob = w.at("sensor_dropout_prob").get<double>();
    for (const auto& n : j.at("npc_spawns")) {
        NpcSpawn s;
        s.lane_path_index = n.at("lane_path_index").get<int>();
        s.entry_time_min = n.at("entry_time_min").get<double>();
        s.entry_time_max = n.at("entry_time_max").get<double>();
        s.speed_min = n.at("speed_min").get<double>();
        s.speed_max = n.at("speed_max").get<double>();
        s.erratic = n.at("erratic").get<bool>();
        if (!n.at("spawn_at").is_null()) s.spawn_at = n.at("spawn_at").get<double>();
        spec.npc_spawns.push_back(s);
    }
    for (const auto& p : j.at("ped_spawns")) {
        PedSpawn s;
        s.crosswalk_index = p.at("crosswalk_index").get<int>();
        s.start_time_min = p.at("start_time_min").get<double>();
        s.start_time_max = p.at("start_time_max").get<double>();
        s.walk_speed_min = p.at("walk_speed_min").get<double>();
        s.walk_speed_max = p.at("walk_speed_max").get<double>();
        spec.ped_spawns.push_back(s);
    }
    spec.smart_circle_enabled = j.at("smart_circle_enabled").get<bool>();
    spec.smart_circle_center = {j.at("smart_circle_center").at(0).get<double>(),
                                j.at("smart_circle_center").at(1).get<double>()};
    spec.smart_circle_radius = j.at("smart_circle_radius").get<double>();
    spec.broadcast_interval = j.at("broadcast_interval").get<double>();
    spec.use_localization = j.at("use_localization").get<bool>();
    spec.lidar_period = j.at("lidar_period").get<double>();
    spec.lidar_beams = j.at("lidar_beams").get<int>();
    spec.conflict_zone_radius = j.at("conflict_zone_radius").get<double>();
    spec.map_path = j.at("map_path").get<std::string>();
    spec.route_path = j.at("route_path").get<std::string>();
    spec.ndt_map_path = j.at("ndt_map_path").get<std::string>();
    return spec;
}

json outcome_to_json(const ScenarioOutcome& o) {
    json j;
    j["finished"] = o.finished;
    j["finish_time"] = o.finished ? json(o.finish_time) : json(nullptr);
    j["max_cross_track_error"] = o.max_cross_track_error;
    j["min_clearance"] = o.min_clearance ? json(*o.min_clearance) : json(nullptr);
    j["collision_count"] = o.collision_count;
    j["emergency_brake_count"] = o.emergency_brake_count;
    j["pause_event_count"] = o.pause_event_count;
    j["localization_loss_count"] = o.localization_loss_count;
    j["priority_violation_count"] = o.priority_violation_count;
    j["ticks"] = o.ticks;
    return j;
}

ScenarioOutcome outcome_from_json(const json& j) {
    ScenarioOutcome o;
    o.finished = j.at("finished").get<bool>();
    if (!j.at("finish_time").is_null()) o.finish_time = j.at("finish_time").get<double>();
    o.max_cross_track_error = j.at("max_cross_track_error").get<double>();
    if (!j.at("min_clearance").is_null()) o.min_clearance = j.at("min_clearance").get<double>();
    o.collision_count = j.at("collision_count").get<int>();
    o.emergency_brake_count = j.at("emergency_brake_count").get<int>();
    o.pause_event_count = j.at("pause_event_count").get<int>();
    o.localization_loss_count = j.at("localization_loss_count").get<int>();
    o.priority_violation_count = j.at("priority_violation_count").get<int>();
    o.ticks = j.at("ticks").get<std::int64_t>();
    return o;
}

// ---- controller ----

ControlCommand compute_command(const Route& route, const ControllerInputs& in,
                               ControllerState& state, const ControllerConfig& cfg) {
    if (in.scan) {
        PointCloud cloud = *in.scan;
        if (cfg.static_world) {
            // map subtraction: drop returns explained by static geometry
            PointCloud dynamic;
            dynamic.stamp = cloud.stamp;
            for (const auto& p : cloud.points) {
                const Vec2 wp = in.pose.transform(p);
                double best = 1e300;
                for (const auto& seg : cfg.static_world->obstacle_segments)
                    best = std::min(best, point_segment_distance(wp, seg.a, seg.b));
                if (best > cfg.map_subtraction_radius) dynamic.points.push_back(p);
            }
            cloud = std::move(dynamic);
        }
        state.obstacles.clear();
        for (const auto& c : cluster_points(cloud, cfg.cluster_tolerance, cfg.cluster_min_size)) {
            TrackedObject obj;
            obj.position = in.pose.transform(c.centroid);
            obj.radius = c.radius;
            state.obstacles.push_back(obj);
        }
    }

    GoalPoint goal;
    try {
        goal = select_goal(route, in.pose, lookahead_for_speed(in.speed, cfg.guidance),
                           cfg.guidance);
    } catch (const OffRouteError&) {
        state.off_route = true;
        ControlCommand halt{state.prev_cmd.steering_target, -cfg.a_max_brake, true};
        state.prev_cmd = halt;
        return halt;
    }

    // comfort layer: published constraints plus cooperative (broadcast) objects
    // in the route corridor ahead; lidar-only obstacles feed the emergency
    // layer exclusively, so an unannounced blocker triggers a hard stop
    SpeedConstraints cons = in.constraints;
    const double s_ego = route.project(in.pose.position()).first;
    for (const auto& obj : in.broadcast) {
        if (obj.source_id == kEgoId) continue;
        const auto [s_o, lateral] = route.project(obj.position);
        if (lateral > cfg.corridor_half_width + obj.radius) continue;
        if (s_o <= s_ego + 0.5 || s_o - s_ego > 40.0) continue;
        const double d = s_o - s_ego - obj.radius;
        if (!cons.obstacle_distance || d < *cons.obstacle_distance) cons.obstacle_distance = d;
    }
    const double v_target = velocity_set(route, in.pose, cons, cfg.guidance);

    // emergency layer on tracked lidar obstacles re-expressed in the ego frame
    std::vector<Cluster> pseudo;
    for (const auto& obj : state.obstacles) {
        Cluster c;
        c.centroid = in.pose.inverse_transform(obj.position);
        c.radius = obj.radius;
        pseudo.push_back(std::move(c));
    }
    std::vector<Vec2> window;
    const double route_len = route.length();
    for (int k = 0; k <= 25; ++k) {
        const double s = route.cyclic() ? s_ego + k : std::min(s_ego + k, route_len);
        window.push_back(in.pose.inverse_transform(route.sample(s)));
    }
    BrakeConfig bc;
    bc.corridor_half_width = cfg.corridor_half_width;
    // hysteresis: once engaged, release only with an extra meter in hand
    bc.margin = cfg.brake_margin + (state.prev_cmd.emergency_brake ? 1.0 : 0.0);
    bc.front_offset = cfg.front_offset;
    const BrakeDecision bd = brake_check(pseudo, in.speed, window, cfg.brake_decel, bc);

    ControlCommand raw;
    raw.steering_target = pure_pursuit_steer(goal, cfg.wheelbase, cfg.guidance.steering_limit);
    raw.accel = std::clamp((v_target - in.speed) / cfg.dt, -cfg.a_max_brake, cfg.a_max_drive);
    raw.emergency_brake = bd.engage;

    TwistLimits limits = cfg.limits;
    limits.dt = cfg.dt;
    const ControlCommand cmd = twist_filter(raw, state.prev_cmd, limits);
    state.prev_cmd = cmd;
    return cmd;
}

// ---- right of way ----

void RightOfWayArbiter::record_arrival(int agent_id) {
    if (agent_id == grantee_) return;
    if (std::find(queue_.begin(), queue_.end(), agent_id) != queue_.end()) return;
    queue_.push_back(agent_id);
}

bool RightOfWayArbiter::in_zone(const Vec2& position) const {
    return (position - zone_.center).norm() <= zone_.radius;
}

bool RightOfWayArbiter::zone_occupied_by_other(
    int agent_id, const std::vector<std::tuple<int, Vec2, double>>& agents) const {
    for (const auto& [id, pos, r] : agents) {
        (void)r;
        if (id != agent_id && in_zone(pos)) return true;
    }
    return false;
}

bool RightOfWayArbiter::has_grant(int agent_id) const { return grantee_ == agent_id; }

bool RightOfWayArbiter::waiting(int agent_id) const {
    return std::find(queue_.begin(), queue_.end(), agent_id) != queue_.end();
}

void RightOfWayArbiter::update(const std::vector<std::tuple<int, Vec2, double>>& agents) {
    const auto find = [&agents](int id) -> const std::tuple<int, Vec2, double>* {
        for (const auto& a : agents) {
            if (std::get<0>(a) == id) return &a;
        }
        return nullptr;
    };

    // drop queued agents that no longer exist
    std::erase_if(queue_, [&](int id) { return find(id) == nullptr; });

    if (grantee_ != -1) {
        const auto* g = find(grantee_);
        if (!g) {
            grantee_ = -1;
            grantee_entered_ = false;
        } else {
            const bool inside = in_zone(std::get<1>(*g));
            if (inside) grantee_entered_ = true;
            if (grantee_entered_ && !inside) {
                grantee_ = -1;  // crossed and exited
                grantee_entered_ = false;
            }
        }
    }
    if (grantee_ == -1 && !queue_.empty()) {
        // the head is granted as soon as nobody else occupies the zone
        if (!zone_occupied_by_other(queue_.front(), agents)) {
            grantee_ = queue_.front();
            grantee_entered_ = false;
            queue_.erase(queue_.begin());
        }
    }
}

std::vector<TrackedObject> smart_circle_broadcast(const SimState& sim, const Vec2& center,
                                                  double radius) {
    std::vector<TrackedObject> out;
    const auto covered = [&](const Vec2& p) { return (p - center).norm() <= radius; };

    if (covered(sim.ego.pose.position())) {
        out.push_back({sim.ego.pose.position(), sim.ego.pose.heading() * sim.ego.speed,
                       sim.ego.footprint().circumradius(), kEgoId});
    }
    for (const auto& npc : sim.npcs) {
        if (!npc.active || !covered(npc.state.pose.position())) continue;
        out.push_back({npc.state.pose.position(), npc.state.pose.heading() * npc.state.speed,
                       npc.state.footprint().circumradius(), npc.id});
    }
    for (const auto& ped : sim.pedestrians) {
        if (!ped.active || !covered(ped.position)) continue;
        out.push_back({ped.position, ped.velocity, ped.footprint().circumradius(), ped.id});
    }
    return out;
}

// ---- scenario execution ----

namespace {

struct StopPoint {
    double s = 0.0;
    int arbiter = -1;  // -1: plain stop line (dwell rule)
};

struct NpcPlan {
    int id = 0;
    NpcSpawn spawn;
    double entry_time = 0.0;
    double cruise = 0.0;
    const LanePath* lane = nullptr;
    std::vector<StopPoint> stops;
    std::size_t next_stop = 0;
    std::vector<std::pair<double, int>> crosswalk_stops;  // (stop arclength, crosswalk index)
    std::size_t next_crosswalk = 0;
    bool detected = false;  // first fused detection already logged
};

struct PedPlan {
    int id = 0;
    double start_time = 0.0;
    double walk_speed = 1.2;
    int crosswalk = 0;
    Vec2 start, end, dir;
    bool started = false;
};

/// Arclengths at which a polyline first enters each zone disk (one stop point
/// per entry, set back from the boundary).
std::vector<StopPoint> zone_entry_stops(const Polyline& path,
                                        const std::vector<ConflictZone>& zones) {
    std::vector<StopPoint> stops;
    for (std::size_t z = 0; z < zones.size(); ++z) {
        bool inside = (path.sample(0.0) - zones[z].center).norm() <= zones[z].radius;
        for (double s = 0.25; s <= path.length(); s += 0.25) {
            const bool now = (path.sample(s) - zones[z].center).norm() <= zones[z].radius;
            if (now && !inside) {
                const double stop_s = s - kZoneStopSetback;
                if (stop_s > 0.5) stops.push_back({stop_s, static_cast<int>(z)});
            }
            inside = now;
        }
    }
    std::sort(stops.begin(), stops.end(),
              [](const StopPoint& a, const StopPoint& b) { return a.s < b.s; });
    return stops;
}

ScenarioOutcome run_impl(const ScenarioSpec& spec, const ScenarioContext& ctx,
                         const ExternalController* external, const TraceSink& sink) {
    if (!ctx.world) throw std::invalid_argument("scenario context needs a compiled world");
    if (!ctx.network) throw std::invalid_argument("scenario context needs a road network");
    if (ctx.route.waypoints().size() < 2) throw RouteTooShortError();
    if (spec.use_localization && !ctx.ndt_map)
        throw std::invalid_argument("localization mode needs an NDT map");

    const double dt = spec.dt;
    const Route& route = ctx.route;
    const StaticWorld& world = *ctx.world;

    // seeded streams; spawn parameters are drawn up front in declaration order
    Rng spawn_rng = Rng::stream(spec.seed, "spawn");
    Rng lidar_rng = Rng::stream(spec.seed, "lidar");
    Rng gps_rng = Rng::stream(spec.seed, "gps");
    Rng odom_rng = Rng::stream(spec.seed, "odom");

    SimState sim;
    sim.weather = spec.weather;
    sim.rng = Rng::stream(spec.seed, "policy");
    sim.ego.pose = route.waypoints().front().pose;

    // conflict zones, one per controlled intersection
    std::vector<ConflictZone> zones;
    std::vector<RightOfWayArbiter> arbiters;
    for (const auto& in : ctx.network->intersections) {
        if (in.control == IntersectionControl::none) continue;
        zones.push_back({in.position, spec.conflict_zone_radius, in.control});
        arbiters.emplace_back(zones.back());
    }

    // agent plans
    std::vector<NpcPlan> npcs;
    for (std::size_t i = 0; i < spec.npc_spawns.size(); ++i) {
        const NpcSpawn& sp = spec.npc_spawns[i];
        if (sp.lane_path_index < 0 ||
            sp.lane_path_index >= static_cast<int>(world.lane_paths.size()))
            throw std::invalid_argument("npc spawn references an unknown lane path");
        NpcPlan plan;
        plan.id = static_cast<int>(i) + 1;
        plan.spawn = sp;
        plan.entry_time = spawn_rng.uniform(sp.entry_time_min, sp.entry_time_max);
        plan.cruise = spawn_rng.uniform(sp.speed_min, sp.speed_max);
        plan.lane = &world.lane_paths[sp.lane_path_index];
        // erratic agents keep the stop list too: they use it for rolling yields
        plan.stops = zone_entry_stops(plan.lane->path, zones);
        for (std::size_t c = 0; c < world.crosswalks.size(); ++c) {
            const auto [s_cw, lat] = plan.lane->path.project(world.crosswalks[c].position);
            if (lat < world.lane_width && s_cw > kCrosswalkSetback)
                plan.crosswalk_stops.push_back({s_cw - kCrosswalkSetback, static_cast<int>(c)});
        }
        std::sort(plan.crosswalk_stops.begin(), plan.crosswalk_stops.end());
        npcs.push_back(std::move(plan));

        NpcVehicle npc;
        npc.id = npcs.back().id;
        npc.erratic = sp.erratic;
        sim.npcs.push_back(npc);
    }
    std::vector<PedPlan> peds;
    for (std::size_t i = 0; i < spec.ped_spawns.size(); ++i) {
        const PedSpawn& sp = spec.ped_spawns[i];
        if (sp.crosswalk_index < 0 ||
            sp.crosswalk_index >= static_cast<int>(world.crosswalks.size()))
            throw std::invalid_argument("pedestrian spawn references an unknown crosswalk");
        const WorldCrosswalk& cw = world.crosswalks[sp.crosswalk_index];
        PedPlan plan;
        plan.id = 100 + static_cast<int>(i);
        plan.start_time = spawn_rng.uniform(sp.start_time_min, sp.start_time_max);
        plan.walk_speed = spawn_rng.uniform(sp.walk_speed_min, sp.walk_speed_max);
        plan.crosswalk = sp.crosswalk_index;
        const double reach = world.lane_width * 2.0 + 2.0;  // curb to curb
        plan.start = cw.position - cw.across * reach * 0.5;
        plan.end = cw.position + cw.across * reach * 0.5;
        plan.dir = cw.across;
        peds.push_back(plan);

        Pedestrian ped;
        ped.id = plan.id;
        ped.crosswalk_index = sp.crosswalk_index;
        ped.position = plan.start;
        ped.start_point = plan.start;
        ped.end_point = plan.end;
        ped.walk_speed = plan.walk_speed;
        ped.start_time = plan.start_time;
        sim.pedestrians.push_back(ped);
    }

    // ego stop schedule: zone entries plus stop lines away from any zone
    std::vector<StopPoint> ego_stops = zone_entry_stops(route.path(), zones);
    for (const auto& sl : world.stop_lines) {
        bool near_zone = false;
        for (const auto& z : zones)
            near_zone = near_zone || (sl.position - z.center).norm() <= z.radius + 15.0;
        if (near_zone) continue;
        const auto [s, lat] = route.project(sl.position);
        if (lat < world.lane_width && s > 1.0) ego_stops.push_back({s - 0.2, -1});
    }
    std::sort(ego_stops.begin(), ego_stops.end(),
              [](const StopPoint& a, const StopPoint& b) { return a.s < b.s; });
    std::size_t ego_next_stop = 0;
    double ego_dwell = 0.0;

    // ego crosswalk schedule
    std::vector<std::pair<double, int>> ego_crosswalks;
    for (std::size_t c = 0; c < world.crosswalks.size(); ++c) {
        const auto [s, lat] = route.project(world.crosswalks[c].position);
        if (lat < world.lane_width) ego_crosswalks.push_back({s, static_cast<int>(c)});
    }

    LidarConfig lidar;
    lidar.beam_count = spec.lidar_beams;
    lidar.max_range = 50.0;
    lidar.range_noise_sigma = kLidarSigma;
    lidar.mount_pose = ctx.lidar_extrinsic.sensor_in_ego;

    NdtConfig track_cfg;
    track_cfg.seed_search_steps = 0;  // odometry keeps the initial error tiny
    NdtConfig reseed_cfg;  // full lattice search after a loss

    ControllerConfig ctl_cfg;
    ctl_cfg.dt = dt;
    ctl_cfg.limits.dt = dt;
    ctl_cfg.static_world = &world;
    ControllerState ctl;

    const int scan_every = std::max(1, static_cast<int>(std::lround(spec.lidar_period / dt)));
    const int bcast_every =
        std::max(1, static_cast<int>(std::lround(spec.broadcast_interval / dt)));

    ScenarioOutcome outcome;
    double min_clearance = 1e300;
    bool any_clearance = false;
    bool prev_eb = false;
    double stationary_for = 0.0;
    bool pause_latched = false;
    bool off_route_logged = false;
    std::size_t consumed_events = 0;

    VehicleState prev_ego = sim.ego;
    Pose2 pose_est = sim.ego.pose;
    GpsFix last_gps;
    PointCloud scan;
    std::vector<TrackedObject> broadcast;

    // per-(agent, zone) presence for edge-triggered violation/co-occupancy
    std::vector<std::vector<bool>> npc_in_zone(npcs.size(),
                                               std::vector<bool>(zones.size(), false));
    std::vector<bool> ego_in_zone(zones.size(), false);
    std::vector<bool> violated(npcs.size(), false);
    bool co_occupied_prev = false;

    const auto emit = [&](const std::string& topic, json payload, std::int64_t tick,
                          double time) {
        if (!sink) return;
        TraceRecord rec;
        rec.tick = tick;
        rec.time = time;
        rec.topic = topic;
        rec.payload = std::move(payload);
        sink(rec);
    };
    const auto emit_event = [&](const std::string& type, int a, int b, const std::string& note,
                                std::int64_t tick, double time) {
        emit("event", {{"type", type}, {"a", a}, {"b", b}, {"note", note}}, tick, time);
    };

    while (sim.time < spec.duration_limit) {
        // ---- spawns ----
        for (auto& plan : npcs) {
            NpcVehicle& npc = sim.npcs[plan.id - 1];
            if (npc.active || npc.finished || sim.time < plan.entry_time) continue;
            const double s0 = plan.spawn.spawn_at.value_or(0.0);
            const Vec2 p = plan.lane->path.sample(s0);
            bool clear = (sim.ego.pose.position() - p).norm() > 8.0;
            for (const auto& other : sim.npcs)
                clear = clear && (!other.active ||
                                  (other.state.pose.position() - p).norm() > 8.0);
            if (!clear) continue;
            const Vec2 t = plan.lane->path.tangent(s0);
            npc.state.pose = {p.x, p.y, std::atan2(t.y, t.x)};
            npc.state.speed = plan.cruise;
            npc.progress = s0;
            npc.cruise_speed = plan.cruise;
            npc.lane_path_index = plan.spawn.lane_path_index;
            npc.active = true;
        }
        for (auto& plan : peds) {
            Pedestrian& ped = sim.pedestrians[&plan - peds.data()];
            if (!ped.active && !ped.finished && sim.time >= plan.start_time) ped.active = true;
        }

        // ---- sensors ----
        const bool scan_tick = sim.tick % scan_every == 0;
        if (scan_tick) {
            std::vector<Footprint> fps;
            std::vector<int> ids;
            for (const auto& npc : sim.npcs) {
                if (!npc.active) continue;
                fps.push_back(npc.state.footprint());
                ids.push_back(npc.id);
            }
            for (const auto& ped : sim.pedestrians) {
                if (!ped.active) continue;
                fps.push_back(ped.footprint());
                ids.push_back(ped.id);
            }
            scan = scan_lidar(world, fps, sim.ego.pose, lidar, sim.weather, lidar_rng, sim.time);
            last_gps = read_gps(sim.ego.pose, {}, kGpsSigma, gps_rng);
        }
        if (spec.smart_circle_enabled && sim.tick % bcast_every == 0)
            broadcast = smart_circle_broadcast(sim, spec.smart_circle_center,
                                               spec.smart_circle_radius);

        // ---- localization ----
        const OdometryDelta odo = read_odometry(prev_ego, sim.ego, dt, {}, odom_rng);
        if (spec.use_localization) {
            pose_est = predict_initial(pose_est, odo);
            if (scan_tick) {
                const PointCloud ds = downsample(scan, kDownsampleRadius);
                const Pose2 init = compose(pose_est, ctx.lidar_extrinsic.sensor_in_ego);
                try {
                    const PoseEstimate est = ndt_match(*ctx.ndt_map, ds, init, track_cfg);
                    pose_est = sensor_to_ego(est.pose, ctx.lidar_extrinsic);
                } catch (const NoOverlapError&) {
                    outcome.localization_loss_count += 1;
                    emit_event("localization_loss", kEgoId, -1, "", sim.tick, sim.time);
                    if (last_gps.valid) {
                        Pose2 reseed{last_gps.position.x, last_gps.position.y, pose_est.yaw};
                        try {
                            const PoseEstimate est = ndt_match(
                                *ctx.ndt_map, ds,
                                compose(reseed, ctx.lidar_extrinsic.sensor_in_ego), reseed_cfg);
                            pose_est = sensor_to_ego(est.pose, ctx.lidar_extrinsic);
                        } catch (const NoOverlapError&) {
                            pose_est = reseed;  // dead-reckon from GPS until overlap returns
                        }
                    }
                }
            }
        } else {
            pose_est = sim.ego.pose;
        }

        // ---- right of way ----
        std::vector<std::tuple<int, Vec2, double>> vehicles;
        vehicles.emplace_back(kEgoId, sim.ego.pose.position(),
                              sim.ego.footprint().circumradius());
        for (const auto& npc : sim.npcs) {
            if (npc.active)
                vehicles.emplace_back(npc.id, npc.state.pose.position(),
                                      npc.state.footprint().circumradius());
        }

        const double s_ego = route.project(sim.ego.pose.position()).first;

        // arrivals (full stop near the stop point) before the grant update
        if (ego_next_stop < ego_stops.size()) {
            const StopPoint& sp = ego_stops[ego_next_stop];
            if (sp.arbiter >= 0 && sim.ego.speed < 0.05 && s_ego >= sp.s - kArrivalWindow &&
                s_ego <= sp.s + kArrivalWindow) {
                RightOfWayArbiter& arb = arbiters[sp.arbiter];
                if (!arb.has_grant(kEgoId) && !arb.waiting(kEgoId)) {
                    arb.record_arrival(kEgoId);
                    emit_event("arrival", kEgoId, sp.arbiter, "", sim.tick, sim.time);
                }
            }
        }
        for (auto& plan : npcs) {
            const NpcVehicle& npc = sim.npcs[plan.id - 1];
            if (!npc.active || plan.spawn.erratic || plan.next_stop >= plan.stops.size())
                continue;
            const StopPoint& sp = plan.stops[plan.next_stop];
            if (npc.state.speed < 0.05 && npc.progress >= sp.s - kArrivalWindow &&
                npc.progress <= sp.s + kArrivalWindow) {
                RightOfWayArbiter& arb = arbiters[sp.arbiter];
                if (!arb.has_grant(plan.id) && !arb.waiting(plan.id)) {
                    arb.record_arrival(plan.id);
                    emit_event("arrival", plan.id, sp.arbiter, "", sim.tick, sim.time);
                }
            }
        }
        for (auto& arb : arbiters) arb.update(vehicles);

        // zone-entry bookkeeping: violations and ego co-occupancy
        for (std::size_t z = 0; z < zones.size(); ++z) {
            ego_in_zone[z] = arbiters[z].in_zone(sim.ego.pose.position());
            for (std::size_t i = 0; i < npcs.size(); ++i) {
                const NpcVehicle& npc = sim.npcs[npcs[i].id - 1];
                const bool now = npc.active && arbiters[z].in_zone(npc.state.pose.position());
                if (now && !npc_in_zone[i][z] && !arbiters[z].has_grant(npcs[i].id) &&
                    !violated[i]) {
                    violated[i] = true;
                    outcome.priority_violation_count += 1;
                    emit_event("priority_violation", npcs[i].id, static_cast<int>(z), "",
                               sim.tick, sim.time);
                }
                npc_in_zone[i][z] = now;
            }
        }
        bool co_occupied = false;
        for (std::size_t z = 0; z < zones.size(); ++z) {
            if (!ego_in_zone[z]) continue;
            for (std::size_t i = 0; i < npcs.size(); ++i) co_occupied |= npc_in_zone[i][z];
        }
        if (co_occupied && !co_occupied_prev)
            emit_event("co_occupancy", kEgoId, -1, "", sim.tick, sim.time);
        co_occupied_prev = co_occupied;

        // ---- ego constraints ----
        SpeedConstraints cons;
        if (ego_next_stop < ego_stops.size()) {
            const StopPoint& sp = ego_stops[ego_next_stop];
            if (sp.arbiter >= 0) {
                RightOfWayArbiter& arb = arbiters[sp.arbiter];
                // the ego always waits while anyone occupies the zone
                if (arb.has_grant(kEgoId) && !arb.zone_occupied_by_other(kEgoId, vehicles)) {
                    ego_next_stop += 1;
                } else {
                    cons.stop_line_distances.push_back(sp.s - s_ego);
                }
            } else {
                cons.stop_line_distances.push_back(sp.s - s_ego);
                if (sim.ego.speed < 0.05 && s_ego >= sp.s - kArrivalWindow) {
                    ego_dwell += dt;
                    if (ego_dwell >= 1.0) {
                        ego_next_stop += 1;
                        ego_dwell = 0.0;
                    }
                }
            }
        }
        const auto crosswalk_busy = [&](int index) {
            for (const auto& ped : sim.pedestrians) {
                if (ped.active && !ped.finished && ped.crosswalk_index == index) return true;
            }
            return false;
        };
        for (const auto& [s_cw, idx] : ego_crosswalks) {
            if (s_cw <= s_ego || s_cw - s_ego > 40.0) continue;
            if (crosswalk_busy(idx))
                cons.crosswalk_stop_distances.push_back(s_cw - s_ego - kCrosswalkSetback);
        }

        // ---- command ----
        ControllerInputs inputs;
        inputs.pose = pose_est;
        inputs.speed = sim.ego.speed;
        inputs.scan = scan_tick ? &scan : nullptr;
        inputs.broadcast = broadcast;
        inputs.constraints = cons;
        inputs.odom = odo;
        inputs.gps = last_gps;
        const ControlCommand cmd =
            external ? (*external)(inputs, sim.tick) : compute_command(route, inputs, ctl, ctl_cfg);
        if (!external && ctl.off_route && !off_route_logged) {
            off_route_logged = true;
            outcome.pause_event_count += 1;
            emit_event("pause", kEgoId, -1, "off route", sim.tick, sim.time);
        }

        // ---- fused detection (in-process controller only) ----
        if (!external) {
            for (auto& plan : npcs) {
                if (plan.detected) continue;
                const NpcVehicle& npc = sim.npcs[plan.id - 1];
                if (!npc.active) continue;
                bool seen = false;
                for (const auto& obj : ctl.obstacles)
                    seen = seen ||
                           (obj.position - npc.state.pose.position()).norm() < kDetectionRadius;
                for (const auto& obj : broadcast)
                    seen = seen || (obj.source_id == plan.id);
                if (seen) {
                    plan.detected = true;
                    emit_event("npc_detected", plan.id, -1, "", sim.tick, sim.time);
                }
            }
        }

        // ---- metrics + per-tick record ----
        const Vec2 ego_pos = sim.ego.pose.position();
        const Vec2 nearest = route.sample(s_ego);
        const double cte = route.tangent(s_ego).cross(ego_pos - nearest);
        outcome.max_cross_track_error = std::max(outcome.max_cross_track_error, std::abs(cte));

        std::optional<double> clearance;
        {
            double best = 1e300;
            bool any = false;
            const Footprint ego_fp = sim.ego.footprint();
            for (const auto& npc : sim.npcs) {
                if (!npc.active) continue;
                best = std::min(best, footprint_distance(ego_fp, npc.state.footprint()));
                any = true;
            }
            for (const auto& ped : sim.pedestrians) {
                if (!ped.active) continue;
                best = std::min(best, footprint_distance(ego_fp, ped.footprint()));
                any = true;
            }
            if (any) {
                clearance = best;
                any_clearance = true;
                min_clearance = std::min(min_clearance, best);
            }
        }

        if (cmd.emergency_brake && !prev_eb) outcome.emergency_brake_count += 1;
        prev_eb = cmd.emergency_brake;

        if (sim.ego.speed < 0.05) {
            stationary_for += dt;
            if (stationary_for > kPauseThreshold && !pause_latched) {
                pause_latched = true;
                outcome.pause_event_count += 1;
                emit_event("pause", kEgoId, -1, "stationary", sim.tick, sim.time);
            }
        } else {
            stationary_for = 0.0;
            pause_latched = false;
        }

        emit("ego",
             {{"x", sim.ego.pose.x},
              {"y", sim.ego.pose.y},
              {"yaw", sim.ego.pose.yaw},
              {"speed", sim.ego.speed},
              {"cte", cte},
              {"clearance", clearance ? json(*clearance) : json(nullptr)},
              {"eb", cmd.emergency_brake}},
             sim.tick, sim.time);
        outcome.ticks += 1;

        // ---- npc/pedestrian policies for this step ----
        AgentControls controls;
        for (auto& plan : npcs) {
            const NpcVehicle& npc = sim.npcs[plan.id - 1];
            if (!npc.active) continue;
            const double s = npc.progress;
            double v_target = plan.cruise;

            if (plan.next_stop < plan.stops.size()) {
                const StopPoint& sp = plan.stops[plan.next_stop];
                RightOfWayArbiter& arb = arbiters[sp.arbiter];
                if (!plan.spawn.erratic) {
                    if (arb.has_grant(plan.id)) {
                        if (s > sp.s + 3.0) plan.next_stop += 1;
                    } else {
                        v_target = std::min(v_target, std::sqrt(4.0 * std::max(0.0, sp.s - s)));
                    }
                } else {
                    // rolling yield: never a full protocol stop, but stays out
                    // while anyone is near or inside the zone
                    bool anyone_near = false;
                    for (const auto& [id, pos, r] : vehicles) {
                        if (id != plan.id &&
                            (pos - arb.zone().center).norm() <=
                                arb.zone().radius + r + kErraticYield)
                            anyone_near = true;
                    }
                    if (anyone_near && s < sp.s + 1.0) {
                        v_target = std::min(v_target, std::sqrt(4.0 * std::max(0.0, sp.s - s)));
                    } else if (s > sp.s - 0.5) {
                        plan.next_stop += 1;  // rolled through without arriving
                    }
                }
            }
            while (plan.next_crosswalk < plan.crosswalk_stops.size() &&
                   s > plan.crosswalk_stops[plan.next_crosswalk].first + 1.0) {
                plan.next_crosswalk += 1;
            }
            if (plan.next_crosswalk < plan.crosswalk_stops.size()) {
                const auto& [s_stop, idx] = plan.crosswalk_stops[plan.next_crosswalk];
                if (crosswalk_busy(idx))
                    v_target = std::min(v_target, std::sqrt(4.0 * std::max(0.0, s_stop - s)));
            }
            // gap keeping against every other body
            const auto keep_gap = [&](const Vec2& p) {
                const Vec2 rel = npc.state.pose.inverse_transform(p);
                if (rel.x > 0.0 && rel.x < 30.0 && std::abs(rel.y) < 2.5)
                    v_target = std::min(
                        v_target, std::sqrt(4.0 * std::max(0.0, rel.x - kNpcHeadway)));
            };
            keep_gap(sim.ego.pose.position());
            for (const auto& other : sim.npcs) {
                if (other.active && other.id != plan.id) keep_gap(other.state.pose.position());
            }
            for (const auto& ped : sim.pedestrians) {
                if (ped.active) keep_gap(ped.position);
            }

            const double lookahead = lookahead_for_speed(npc.state.speed);
            const Vec2 goal_world =
                plan.lane->path.sample(std::min(s + lookahead, plan.lane->path.length()));
            GoalPoint goal;
            goal.point = npc.state.pose.inverse_transform(goal_world);
            goal.lookahead = goal.point.norm();
            ControlCommand c;
            c.steering_target = pure_pursuit_steer(goal, npc.state.params.wheelbase);
            c.accel = std::clamp((v_target - npc.state.speed) / dt,
                                 -npc.state.params.a_max_brake, npc.state.params.a_max_drive);
            controls.npc_commands.push_back({plan.id, c});
        }
        for (auto& plan : peds) {
            Pedestrian& ped = sim.pedestrians[&plan - peds.data()];
            if (!ped.active) continue;
            if (!plan.started) {
                // step off the curb only when no vehicle is bearing down
                bool vehicle_coming = sim.ego.speed > 0.5 &&
                                      (sim.ego.pose.position() -
                                       world.crosswalks[plan.crosswalk].position)
                                              .norm() < 6.0;
                for (const auto& npc : sim.npcs) {
                    vehicle_coming =
                        vehicle_coming ||
                        (npc.active && npc.state.speed > 0.5 &&
                         (npc.state.pose.position() -
                          world.crosswalks[plan.crosswalk].position)
                                 .norm() < 6.0);
                }
                if (!vehicle_coming) plan.started = true;
            }
            controls.pedestrian_velocities.push_back(
                {plan.id, plan.started ? plan.dir * plan.walk_speed : Vec2{0.0, 0.0}});
        }
        const PolicyFn policy = [&controls](const SimState&, Rng&) { return controls; };

        // ---- step ----
        prev_ego = sim.ego;
        step(sim, cmd, dt, policy);

        // post-step agent bookkeeping
        for (auto& plan : npcs) {
            NpcVehicle& npc = sim.npcs[plan.id - 1];
            if (!npc.active) continue;
            const double s = plan.lane->path.project(npc.state.pose.position()).first;
            npc.progress = std::max(npc.progress, s);
            // parked vehicles (zero cruise) never despawn on their own
            if (npc.progress >= plan.lane->path.length() - 0.5 && plan.cruise > 0.05) {
                npc.active = false;
                npc.finished = true;
            }
        }
        for (auto& plan : peds) {
            Pedestrian& ped = sim.pedestrians[&plan - peds.data()];
            if (!ped.active) continue;
            if ((ped.position - plan.end).dot(plan.dir) >= 0.0) {
                ped.active = false;
                ped.finished = true;
            }
        }

        // sim events (collision onsets) land in the trace as they occur
        for (; consumed_events < sim.events.size(); ++consumed_events) {
            const SimEvent& ev = sim.events[consumed_events];
            emit_event(ev.type, ev.a_id, ev.b_id, ev.note, ev.tick, ev.time);
            if (ev.type == "collision" && (ev.a_id == kEgoId || ev.b_id == kEgoId))
                outcome.collision_count += 1;
        }

        // route completion
        const double s_done = route.project(sim.ego.pose.position()).first;
        if (!route.cyclic() && s_done >= route.length() - 2.0) {
            outcome.finished = true;
            outcome.finish_time = sim.time;
            emit_event("finish", kEgoId, -1, "", sim.tick, sim.time);
            break;
        }
    }

    if (any_clearance) outcome.min_clearance = min_clearance;
    return outcome;
}

}  // namespace

ScenarioOutcome run_scenario(const ScenarioSpec& spec, const ScenarioContext& ctx,
                             const TraceSink& sink) {
    return run_impl(spec, ctx, nullptr, sink);
}

ScenarioOutcome run_scenario_external(const ScenarioSpec& spec, const ScenarioContext& ctx,
                                      const ExternalController& controller,
                                      const TraceSink& sink) {
    return run_impl(spec, ctx, &controller, sink);
}

}  // namespace lindensim
