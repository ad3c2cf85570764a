#pragma once

#include <cstdint>
#include <string>

#include "lindensim/scenario.hpp"

namespace lindensim {

inline constexpr int kBridgeVersion = 1;

/// Wire format: newline-delimited JSON objects
/// {"topic": string, "seq": unsigned, "stamp": seconds, "data": object}
/// with seq strictly increasing per topic per connection.
///
/// Session: the server sends "hello" {version, dt, topics}, then per tick
/// publishes (in this order) "scan" on scan ticks, "odom", "gps" on scan
/// ticks, "pose_estimate" {x, y, yaw, speed}, "object_list" when the smart
/// circle is on, and finally "constraints" — always last, so its arrival
/// tells the client the tick is fully published. The server then blocks until
/// the client answers with exactly one "ctrl_cmd" {tick, steering_target,
/// accel, emergency_brake}; a ctrl_cmd for the wrong tick draws a
/// "protocol_error" reply and is ignored; a malformed line aborts the session.

struct BridgeResult {
    ScenarioOutcome outcome;
    bool completed = false;     // false: client disconnected or protocol abort
    std::int64_t commands = 0;  // ctrl_cmd messages accepted == ticks stepped
    std::string error;          // non-empty on abort
};

/// Serve one lockstep session on localhost:port (single client). Blocks until
/// the scenario finishes or the connection dies; on a dead connection the
/// partial outcome is re-derived from the records emitted so far.
BridgeResult bridge_serve(const ScenarioSpec& spec, const ScenarioContext& ctx, int port,
                          const TraceSink& sink = nullptr);

struct BridgeClientResult {
    std::int64_t ticks = 0;   // commands sent
    std::string error;
};

/// Reference client: connects to a bridge server and closes the loop with the
/// in-process guidance chain (compute_command) fed purely from wire messages.
BridgeClientResult bridge_client_run(int port, const Route& route, const ControllerConfig& cfg);

}  // namespace lindensim
