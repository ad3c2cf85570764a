#pragma once

#include <string>

#include "lindensim/geometry.hpp"

namespace lindensim {

struct VehicleParams {
    double wheelbase = 3.0;            // m
    double length = 5.0;               // m, footprint
    double width = 2.0;                // m, footprint
    double a_max_brake = 6.0;          // m/s^2
    double a_max_drive = 2.0;          // m/s^2
    double steering_limit = 0.55;      // rad
    double steering_rate_limit = 0.7;  // rad/s
};

struct VehicleState {
    Pose2 pose;
    double speed = 0.0;     // m/s, >= 0
    double steering = 0.0;  // rad, front-wheel angle
    VehicleParams params;

    Footprint footprint() const {
        return {pose.position(), pose.yaw, params.length * 0.5, params.width * 0.5};
    }
};

struct ControlCommand {
    double steering_target = 0.0;  // rad
    double accel = 0.0;            // m/s^2, negative = braking
    bool emergency_brake = false;
};

enum class WeatherCondition { clear, rain, fog };

struct WeatherState {
    WeatherCondition condition = WeatherCondition::clear;
    double friction_factor = 1.0;     // (0, 1]
    double sensor_noise_scale = 1.0;  // >= 1
    double sensor_dropout_prob = 0.0;
};

std::string weather_condition_to_string(WeatherCondition c);
WeatherCondition weather_condition_from_string(const std::string& s);

/// One explicit-Euler step of the kinematic bicycle. Steering slews toward the
/// target at the rate limit; braking authority scales with road friction;
/// emergency braking applies full (friction-scaled) deceleration.
VehicleState bicycle_step(const VehicleState& v, const ControlCommand& cmd,
                          const WeatherState& weather, double dt);

}  // namespace lindensim
