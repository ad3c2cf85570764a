#include "lindensim/bridge.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <map>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

namespace lindensim {

using nlohmann::json;

namespace {

struct SessionAbort : std::runtime_error {
    explicit SessionAbort(const std::string& what) : std::runtime_error(what) {}
};

struct LineChannel {
    int fd = -1;
    std::string buf;

    ~LineChannel() {
        if (fd >= 0) ::close(fd);
    }

    void send_line(const std::string& line) {
        std::string out = line;
        out += '\n';
        std::size_t sent = 0;
        while (sent < out.size()) {
            const ssize_t n = ::send(fd, out.data() + sent, out.size() - sent, MSG_NOSIGNAL);
            if (n <= 0) throw SessionAbort("send failed: " + std::string(std::strerror(errno)));
            sent += static_cast<std::size_t>(n);
        }
    }

    /// One line without the newline; false on orderly EOF.
    bool recv_line(std::string& out) {
        for (;;) {
            const std::size_t nl = buf.find('\n');
            if (nl != std::string::npos) {
                out = buf.substr(0, nl);
                buf.erase(0, nl + 1);
                return true;
            }
            char chunk[4096];
            const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
            if (n == 0) return false;
            if (n < 0) throw SessionAbort("recv failed: " + std::string(std::strerror(errno)));
            buf.append(chunk, static_cast<std::size_t>(n));
        }
    }
};

json vec2_json(const Vec2& v) { return json::array({v.x, v.y}); }
Vec2 vec2_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json scan_to_json(const PointCloud& scan) {
    json pts = json::array();
    for (const auto& p : scan.points) pts.push_back(vec2_json(p));
    return {{"stamp", scan.stamp}, {"points", std::move(pts)}};
}

PointCloud scan_from_json(const json& j) {
    PointCloud scan;
    scan.stamp = j.at("stamp").get<double>();
    for (const auto& p : j.at("points")) scan.points.push_back(vec2_from(p));
    return scan;
}

json objects_to_json(const std::vector<TrackedObject>& objs) {
    json arr = json::array();
    for (const auto& o : objs)
        arr.push_back({{"position", vec2_json(o.position)},
                       {"velocity", vec2_json(o.velocity)},
                       {"radius", o.radius},
                       {"source_id", o.source_id}});
    return arr;
}

std::vector<TrackedObject> objects_from_json(const json& arr) {
    std::vector<TrackedObject> objs;
    for (const auto& j : arr)
        objs.push_back({vec2_from(j.at("position")), vec2_from(j.at("velocity")),
                        j.at("radius").get<double>(), j.at("source_id").get<int>()});
    return objs;
}

json constraints_to_json(const SpeedConstraints& c) {
    json j;
    j["stop_line_distances"] = c.stop_line_distances;
    j["crosswalk_stop_distances"] = c.crosswalk_stop_distances;
    j["obstacle_distance"] = c.obstacle_distance ? json(*c.obstacle_distance) : json(nullptr);
    return j;
}

SpeedConstraints constraints_from_json(const json& j) {
    SpeedConstraints c;
    c.stop_line_distances = j.at("stop_line_distances").get<std::vector<double>>();
    c.crosswalk_stop_distances = j.at("crosswalk_stop_distances").get<std::vector<double>>();
    if (!j.at("obstacle_distance").is_null())
        c.obstacle_distance = j.at("obstacle_distance").get<double>();
    return c;
}

std::string record_line(const TraceRecord& rec) {
    const json j = {{"tick", rec.tick}, {"time", rec.time}, {"topic", rec.topic},
                    {"data", rec.payload}};
    return j.dump() + "\n";
}

class Publisher {
public:
    explicit Publisher(LineChannel& ch) : ch_(ch) {}

    void publish(const std::string& topic, json data, double stamp) {
        const json msg = {{"topic", topic}, {"seq", seq_[topic]++}, {"stamp", stamp},
                          {"data", std::move(data)}};
        ch_.send_line(msg.dump());
    }

private:
    LineChannel& ch_;
    std::map<std::string, std::uint64_t> seq_;
};

}  // namespace

BridgeResult bridge_serve(const ScenarioSpec& spec, const ScenarioContext& ctx, int port,
                          const TraceSink& sink) {
    BridgeResult result;

    const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listener < 0) throw std::runtime_error("socket() failed");
    const int yes = 1;
    ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(listener);
        throw std::runtime_error("bind() failed on port " + std::to_string(port));
    }
    if (::listen(listener, 1) != 0) {
        ::close(listener);
        throw std::runtime_error("listen() failed");
    }
    LineChannel ch;
    ch.fd = ::accept(listener, nullptr, nullptr);
    ::close(listener);
    if (ch.fd < 0) throw std::runtime_error("accept() failed");
    // lockstep round trips stall on Nagle + delayed ACK without this
    ::setsockopt(ch.fd, IPPROTO_TCP, TCP_NODELAY, &yes, sizeof(yes));

    Publisher pub(ch);
    pub.publish("hello",
                {{"version", kBridgeVersion},
                 {"dt", spec.dt},
                 {"topics", json::array({"scan", "odom", "gps", "pose_estimate", "object_list",
                                         "constraints", "ctrl_cmd"})}},
                0.0);

    // mirror the per-tick records so a dead session still yields metrics
    std::string partial;
    const TraceSink tee = [&](const TraceRecord& rec) {
        partial += record_line(rec);
        if (sink) sink(rec);
    };

    const ExternalController controller = [&](const ControllerInputs& in,
                                              std::int64_t tick) -> ControlCommand {
        const double stamp = static_cast<double>(tick) * spec.dt;
        if (in.scan) pub.publish("scan", scan_to_json(*in.scan), stamp);
        pub.publish("odom",
                    {{"d_translation", in.odom.d_translation},
                     {"d_yaw", in.odom.d_yaw},
                     {"interval", in.odom.interval}},
                    stamp);
        if (in.scan)
            pub.publish("gps",
                        {{"position", vec2_json(in.gps.position)},
                         {"valid", in.gps.valid},
                         {"noise_sigma", in.gps.noise_sigma}},
                        stamp);
        pub.publish("pose_estimate",
                    {{"x", in.pose.x}, {"y", in.pose.y}, {"yaw", in.pose.yaw},
                     {"speed", in.speed}},
                    stamp);
        if (spec.smart_circle_enabled)
            pub.publish("object_list", objects_to_json(in.broadcast), stamp);
        json cons = constraints_to_json(in.constraints);
        cons["tick"] = tick;  // published last: the client's cue to answer
        pub.publish("constraints", std::move(cons), stamp);

        for (;;) {
            std::string line;
            if (!ch.recv_line(line)) throw SessionAbort("client disconnected");
            json msg;
            try {
                msg = json::parse(line);
            } catch (const json::exception&) {
                pub.publish("error", {{"reason", "malformed JSON"}}, stamp);
                throw SessionAbort("malformed JSON from client");
            }
            if (msg.value("topic", std::string{}) != "ctrl_cmd") {
                pub.publish("protocol_error", {{"reason", "expected ctrl_cmd"}}, stamp);
                continue;
            }
            const json& data = msg.at("data");
            if (data.value("tick", static_cast<std::int64_t>(-1)) != tick) {
                pub.publish("protocol_error",
                            {{"reason", "ctrl_cmd for wrong tick"}, {"expected", tick}}, stamp);
                continue;
            }
            ControlCommand cmd;
            cmd.steering_target = data.at("steering_target").get<double>();
            cmd.accel = data.at("accel").get<double>();
            cmd.emergency_brake = data.at("emergency_brake").get<bool>();
            const ControlCommand raw = cmd;
            cmd.steering_target = std::clamp(cmd.steering_target, -0.55, 0.55);
            cmd.accel = std::clamp(cmd.accel, -6.0, 2.0);
            if (cmd.steering_target != raw.steering_target || cmd.accel != raw.accel) {
                TraceRecord warn;
                warn.tick = tick;
                warn.time = stamp;
                warn.topic = "event";
                warn.payload = {{"type", "command_clamped"}, {"a", kEgoId}, {"b", -1},
                                {"note", "ctrl_cmd fields out of range"}};
                tee(warn);
            }
            result.commands += 1;
            return cmd;
        }
    };

    try {
        result.outcome = run_scenario_external(spec, ctx, controller, tee);
        result.completed = true;
    } catch (const SessionAbort& abort) {
        result.error = abort.what();
        result.outcome = outcome_from_json(replay_trace(partial).derived_metrics);
    }
    return result;
}

BridgeClientResult bridge_client_run(int port, const Route& route, const ControllerConfig& cfg) {
    BridgeClientResult result;

    LineChannel ch;
    for (int attempt = 0;; ++attempt) {
        ch.fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (ch.fd < 0) throw std::runtime_error("socket() failed");
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = htons(static_cast<std::uint16_t>(port));
        if (::connect(ch.fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0) {
            const int yes = 1;
            ::setsockopt(ch.fd, IPPROTO_TCP, TCP_NODELAY, &yes, sizeof(yes));
            break;
        }
        ::close(ch.fd);
        ch.fd = -1;
        if (attempt >= 100) throw std::runtime_error("could not connect to bridge server");
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }

    std::string line;
    if (!ch.recv_line(line)) {
        result.error = "connection closed before hello";
        return result;
    }
    const json hello = json::parse(line);
    if (hello.value("topic", std::string{}) != "hello") {
        result.error = "expected hello";
        return result;
    }
    ControllerConfig client_cfg = cfg;
    client_cfg.dt = hello.at("data").at("dt").get<double>();
    client_cfg.limits.dt = client_cfg.dt;

    ControllerState state;
    PointCloud scan;
    bool have_scan = false;
    ControllerInputs in;
    std::uint64_t ctrl_seq = 0;

    while (ch.recv_line(line)) {
        const json msg = json::parse(line);
        const std::string topic = msg.value("topic", std::string{});
        const json& data = msg.at("data");
        if (topic == "scan") {
            scan = scan_from_json(data);
            have_scan = true;
        } else if (topic == "odom") {
            in.odom = {data.at("d_translation").get<double>(), data.at("d_yaw").get<double>(),
                       data.at("interval").get<double>()};
        } else if (topic == "gps") {
            in.gps = {vec2_from(data.at("position")), data.at("valid").get<bool>(),
                      data.at("noise_sigma").get<double>()};
        } else if (topic == "pose_estimate") {
            in.pose = {data.at("x").get<double>(), data.at("y").get<double>(),
                       data.at("yaw").get<double>()};
            in.speed = data.at("speed").get<double>();
        } else if (topic == "object_list") {
            in.broadcast = objects_from_json(data);
        } else if (topic == "constraints") {
            in.constraints = constraints_from_json(data);
            in.scan = have_scan ? &scan : nullptr;
            const ControlCommand cmd = compute_command(route, in, state, client_cfg);
            const std::int64_t tick = data.at("tick").get<std::int64_t>();
            const json reply = {{"topic", "ctrl_cmd"},
                                {"seq", ctrl_seq++},
                                {"stamp", msg.at("stamp").get<double>()},
                                {"data",
                                 {{"tick", tick},
                                  {"steering_target", cmd.steering_target},
                                  {"accel", cmd.accel},
                                  {"emergency_brake", cmd.emergency_brake}}}};
            ch.send_line(reply.dump());
            result.ticks += 1;
            have_scan = false;
        }
        // protocol_error / error replies are informational for this client
    }
    return result;
}

}  // namespace lindensim
