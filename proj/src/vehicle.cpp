#include "lindensim/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lindensim {

std::string weather_condition_to_string(WeatherCondition c) {
    switch (c) {
        case WeatherCondition::clear: return "clear";
        case WeatherCondition::rain: return "rain";
        case WeatherCondition::fog: return "fog";
    }
    return "clear";
}

WeatherCondition weather_condition_from_string(const std::string& s) {
    if (s == "clear") return WeatherCondition::clear;
    if (s == "rain") return WeatherCondition::rain;
    if (s == "fog") return WeatherCondition::fog;
    throw std::invalid_argument("unknown weather condition: " + s);
}

VehicleState bicycle_step(const VehicleState& v, const ControlCommand& cmd,
                          const WeatherState& weather, double dt) {
    VehicleState out = v;
    const VehicleParams& p = v.params;

    // steering slew toward the target, both clamped to the mechanical limit
    const double target = std::clamp(cmd.steering_target, -p.steering_limit, p.steering_limit);
    const double max_delta = p.steering_rate_limit * dt;
    out.steering = v.steering + std::clamp(target - v.steering, -max_delta, max_delta);

    const double brake_authority = p.a_max_brake * weather.friction_factor;
    double accel = cmd.emergency_brake ? -brake_authority : cmd.accel;
    accel = std::clamp(accel, -brake_authority, p.a_max_drive);

    out.speed = std::max(0.0, v.speed + accel * dt);

    // advance with the updated speed along the previous heading, then turn
    out.pose.x = v.pose.x + out.speed * std::cos(v.pose.yaw) * dt;
    out.pose.y = v.pose.y + out.speed * std::sin(v.pose.yaw) * dt;
    out.pose.yaw =
        wrap_angle(v.pose.yaw + (out.speed / p.wheelbase) * std::tan(out.steering) * dt);
    return out;
}

}  // namespace lindensim
