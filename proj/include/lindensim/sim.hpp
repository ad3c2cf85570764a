#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "lindensim/rng.hpp"
#include "lindensim/vehicle.hpp"

namespace lindensim {

constexpr int kEgoId = 0;

struct SimEvent {
    std::int64_t tick = 0;
    double time = 0.0;
    std::string type;
    int a_id = -1;
    int b_id = -1;
    std::string note;
};

struct NpcVehicle {
    int id = 0;
    VehicleState state;
    bool active = false;
    // policy bookkeeping (owned by the scenario harness)
    int lane_path_index = -1;
    double progress = 0.0;     // arclength along the lane path
    double cruise_speed = 0.0;
    double spawn_time = 0.0;
    bool erratic = false;
    bool finished = false;
};

struct Pedestrian {
    int id = 0;
    Vec2 position;
    Vec2 velocity;
    bool active = false;
    // crossing policy bookkeeping
    int crosswalk_index = -1;
    double start_time = 0.0;
    double walk_speed = 1.2;
    Vec2 start_point;
    Vec2 end_point;
    bool finished = false;

    Footprint footprint() const { return {position, 0.0, 0.2, 0.2}; }
};

struct SimState {
    std::int64_t tick = 0;
    double time = 0.0;
    VehicleState ego;
    std::vector<NpcVehicle> npcs;
    std::vector<Pedestrian> pedestrians;
    WeatherState weather;
    Rng rng{0};
    std::vector<SimEvent> events;
    // overlapping pairs carried across ticks so collisions are edge-triggered
    std::set<std::pair<int, int>> active_overlaps;
};

struct IntegrityFault : std::runtime_error {
    IntegrityFault(std::int64_t tick_, const std::string& what_)
        : std::runtime_error("integrity fault at tick " + std::to_string(tick_) + ": " + what_),
          tick(tick_) {}
    std::int64_t tick;
};

/// Per-agent control sampled from the previous state. Called in ascending agent
/// id order so RNG draw order is total. Pedestrian motion is produced by
/// the same callback via the returned velocity.
struct AgentControls {
    std::vector<std::pair<int, ControlCommand>> npc_commands;     // by npc id
    std::vector<std::pair<int, Vec2>> pedestrian_velocities;      // by pedestrian id
};

using PolicyFn = std::function<AgentControls(const SimState&, Rng&)>;

/// One fixed-step tick: (1) policies sample previous state, (2) all agents
/// integrate, (3) collision onsets recorded, (4) time advances. Deterministic
/// given identical inputs and RNG state. Throws IntegrityFault on NaN.
void step(SimState& state, const ControlCommand& ego_cmd, double dt,
          const PolicyFn& policies = nullptr);

}  // namespace lindensim
