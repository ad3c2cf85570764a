#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lindensim/guidance.hpp"
#include "lindensim/io.hpp"
#include "lindensim/ndt.hpp"
#include "lindensim/perception.hpp"
#include "lindensim/road_network.hpp"
#include "lindensim/sim.hpp"
#include "lindensim/world.hpp"

namespace lindensim {

enum class ScenarioKind {
    free_run,
    intersection,
    traffic_circle,
    pedestrian_crossing,
    stopped_obstacle,
    slow_fleet,
    weather,
};

std::string to_string(ScenarioKind kind);
ScenarioKind scenario_kind_from_string(const std::string& s);

struct NpcSpawn {
    int lane_path_index = 0;
    double entry_time_min = 0.0;
    double entry_time_max = 0.0;
    double speed_min = 3.0;
    double speed_max = 6.0;
    bool erratic = false;
    // spawn at this arclength instead of the lane path start; combined with a
    // zero speed range this places a parked vehicle
    std::optional<double> spawn_at;
};

struct PedSpawn {
    int crosswalk_index = 0;
    double start_time_min = 0.0;
    double start_time_max = 0.0;
    double walk_speed_min = 0.9;
    double walk_speed_max = 1.6;
};

struct ScenarioSpec {
    std::string name = "unnamed";
    ScenarioKind kind = ScenarioKind::free_run;
    std::uint64_t seed = 1;
    double duration_limit = 120.0;
    double dt = 0.02;
    WeatherState weather;
    std::vector<NpcSpawn> npc_spawns;
    std::vector<PedSpawn> ped_spawns;

    bool smart_circle_enabled = false;
    Vec2 smart_circle_center;
    double smart_circle_radius = 0.0;
    double broadcast_interval = 0.1;  // s

    bool use_localization = false;  // false: ground-truth pose feeds guidance
    double lidar_period = 0.1;      // s between scans
    int lidar_beams = 180;
    // conflict-zone disk radius applied to every controlled intersection
    double conflict_zone_radius = 8.0;

    // file references, used by the CLI (in-process callers pass a context)
    std::string map_path;
    std::string route_path;
    std::string ndt_map_path;
};

nlohmann::json scenario_to_json(const ScenarioSpec& spec);
ScenarioSpec scenario_from_json(const nlohmann::json& j);

/// Resolved inputs for a run.
struct ScenarioContext {
    const RoadNetwork* network = nullptr;  // intersections, stop lines, crosswalks
    const StaticWorld* world = nullptr;
    Route route;
    const NdtMap* ndt_map = nullptr;  // required when use_localization
    Extrinsic lidar_extrinsic;
};

struct ScenarioOutcome {
    bool finished = false;
    double finish_time = 0.0;  // valid when finished
    double max_cross_track_error = 0.0;
    std::optional<double> min_clearance;  // absent when no other agents existed
    int collision_count = 0;
    int emergency_brake_count = 0;
    int pause_event_count = 0;
    int localization_loss_count = 0;
    int priority_violation_count = 0;
    std::int64_t ticks = 0;
};

nlohmann::json outcome_to_json(const ScenarioOutcome& outcome);
ScenarioOutcome outcome_from_json(const nlohmann::json& j);

// ---- control chain shared by the in-process loop and bridge clients ----

/// World-frame obstacle as tracked by the controller (fused lidar clusters
/// plus smart-circle broadcasts).
struct TrackedObject {
    Vec2 position;
    Vec2 velocity;
    double radius = 0.5;
    int source_id = -1;  // agent id when from a broadcast, -1 for lidar-only
};

/// Everything the command computation consumes for one tick. Exactly this
/// data crosses the bridge, so an external client can reproduce the chain.
struct ControllerInputs {
    Pose2 pose;  // pose estimate (ground truth or NDT)
    double speed = 0.0;
    const PointCloud* scan = nullptr;  // non-null on scan ticks
    std::vector<TrackedObject> broadcast;  // smart-circle objects, world frame
    SpeedConstraints constraints;  // arbiter-filtered stop lines + crosswalks
    // raw sensor feeds; unused by compute_command but published to bridges
    OdometryDelta odom;
    GpsFix gps;
};

struct ControllerConfig {
    GuidanceConfig guidance;
    TwistLimits limits;
    double cluster_tolerance = 0.7;
    int cluster_min_size = 3;
    double corridor_half_width = 1.6;
    double brake_decel = 6.0;
    double brake_margin = 0.5;
    double front_offset = 2.5;  // ego origin to front bumper
    double wheelbase = 3.0;
    double a_max_brake = 6.0;
    double a_max_drive = 2.0;
    double dt = 0.02;
    // when set, scan points within map_subtraction_radius of static geometry
    // are removed before clustering (walls never become brake targets)
    const StaticWorld* static_world = nullptr;
    double map_subtraction_radius = 0.4;
};

struct ControllerState {
    ControlCommand prev_cmd;
    std::vector<TrackedObject> obstacles;  // world frame, refreshed on scan ticks
    bool off_route = false;                // latched when select_goal fails
};

/// One tick of the guidance chain: refresh tracked obstacles from the scan
/// and broadcasts, pick the pursuit goal, apply the speed rule chain and the
/// emergency-brake check, then twist-filter against the previous command.
/// Pure given (inputs, state); both the in-process loop and bridge clients
/// call exactly this.
ControlCommand compute_command(const Route& route, const ControllerInputs& inputs,
                               ControllerState& state, const ControllerConfig& cfg);

// ---- right-of-way arbitration ----

struct ConflictZone {
    Vec2 center;
    double radius = 8.0;
    IntersectionControl control = IntersectionControl::none;
};

/// Arrival-ordered entry grants for one controlled intersection or circle.
class RightOfWayArbiter {
public:
    explicit RightOfWayArbiter(ConflictZone zone) : zone_(zone) {}

    const ConflictZone& zone() const { return zone_; }

    /// Record that an agent has come to a full stop at its entry stop line.
    void record_arrival(int agent_id);

    /// Advance grant state from ground-truth agent positions (id, position,
    /// body circumradius). Grants follow arrival order; the next grant waits
    /// until the previous grantee has exited the zone.
    void update(const std::vector<std::tuple<int, Vec2, double>>& agents);

    bool has_grant(int agent_id) const;
    bool zone_occupied_by_other(int agent_id,
                                const std::vector<std::tuple<int, Vec2, double>>& agents) const;
    bool waiting(int agent_id) const;
    /// Membership is by body center, so an agent holding at the entry stop
    /// point (set back from the disk boundary) counts as outside.
    bool in_zone(const Vec2& position) const;

private:
    ConflictZone zone_;
    std::vector<int> queue_;  // arrival order
    int grantee_ = -1;
    bool grantee_entered_ = false;
};

/// Ground-truth states of all agents inside the coverage disk (the overhead
/// sensor is occlusion-free by construction).
std::vector<TrackedObject> smart_circle_broadcast(const SimState& sim, const Vec2& center,
                                                  double radius);

ScenarioOutcome run_scenario(const ScenarioSpec& spec, const ScenarioContext& ctx,
                             const TraceSink& sink = nullptr);

/// run_scenario with the ego command supplied externally (lockstep bridges).
/// The callback receives the published per-tick inputs and must return the
/// command; everything else matches run_scenario.
using ExternalController = std::function<ControlCommand(const ControllerInputs&, std::int64_t tick)>;
ScenarioOutcome run_scenario_external(const ScenarioSpec& spec, const ScenarioContext& ctx,
                                      const ExternalController& controller,
                                      const TraceSink& sink = nullptr);

}  // namespace lindensim
