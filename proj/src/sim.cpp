#include "lindensim/sim.hpp"

#include <algorithm>
#include <cmath>

namespace lindensim {

namespace {

bool finite(double v) { return std::isfinite(v); }

void check_finite(const SimState& s) {
    const auto bad = [](const VehicleState& v) {
        return !(finite(v.pose.x) && finite(v.pose.y) && finite(v.pose.yaw) &&
                 finite(v.speed) && finite(v.steering));
    };
    if (bad(s.ego)) throw IntegrityFault(s.tick, "NaN in ego state");
    for (const auto& n : s.npcs) {
        if (n.active && bad(n.state))
            throw IntegrityFault(s.tick, "NaN in npc " + std::to_string(n.id));
    }
    for (const auto& p : s.pedestrians) {
        if (p.active && !(finite(p.position.x) && finite(p.position.y)))
            throw IntegrityFault(s.tick, "NaN in pedestrian " + std::to_string(p.id));
    }
}

struct Body {
    int id;
    Footprint fp;
};

}  // namespace

void step(SimState& state, const ControlCommand& ego_cmd, double dt, const PolicyFn& policies) {
    if (!finite(ego_cmd.steering_target) || !finite(ego_cmd.accel))
        throw IntegrityFault(state.tick, "NaN in ego command");

    // (1) policies sample the previous state
    AgentControls controls;
    if (policies) controls = policies(state, state.rng);

    // (2) integrate
    state.ego = bicycle_step(state.ego, ego_cmd, state.weather, dt);

    for (auto& npc : state.npcs) {
        if (!npc.active) continue;
        ControlCommand cmd;
        for (const auto& [id, c] : controls.npc_commands) {
            if (id == npc.id) {
                cmd = c;
                break;
            }
        }
        npc.state = bicycle_step(npc.state, cmd, state.weather, dt);
    }
    for (auto& ped : state.pedestrians) {
        if (!ped.active) continue;
        for (const auto& [id, v] : controls.pedestrian_velocities) {
            if (id == ped.id) {
                ped.velocity = v;
                break;
            }
        }
        ped.position += ped.velocity * dt;
    }

    check_finite(state);

    // (3) collision onsets (edge-triggered on overlap)
    std::vector<Body> bodies;
    bodies.push_back({kEgoId, state.ego.footprint()});
    for (const auto& npc : state.npcs) {
        if (npc.active) bodies.push_back({npc.id, npc.state.footprint()});
    }
    for (const auto& ped : state.pedestrians) {
        if (ped.active) bodies.push_back({ped.id, ped.footprint()});
    }

    std::set<std::pair<int, int>> current;
    for (std::size_t i = 0; i < bodies.size(); ++i) {
        for (std::size_t j = i + 1; j < bodies.size(); ++j) {
            if (!overlap(bodies[i].fp, bodies[j].fp)) continue;
            const auto key = std::minmax(bodies[i].id, bodies[j].id);
            current.insert(key);
            if (!state.active_overlaps.count(key)) {
                state.events.push_back({state.tick + 1, (state.tick + 1) * dt, "collision",
                                        key.first, key.second, ""});
            }
        }
    }
    state.active_overlaps = std::move(current);

    // (4) time advances; time is always tick * dt exactly
    state.tick += 1;
    state.time = static_cast<double>(state.tick) * dt;
}

}  // namespace lindensim
