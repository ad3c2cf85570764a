#include "lindensim/sensors.hpp"

#include <algorithm>
#include <cmath>

namespace lindensim {

PointCloud scan_lidar(const StaticWorld& world, const std::vector<Footprint>& agents,
                      const Pose2& ego_pose, const LidarConfig& cfg,
                      const WeatherState& weather, Rng& rng, double stamp) {
    PointCloud cloud;
    cloud.stamp = stamp;
    const Pose2 sensor = compose(ego_pose, cfg.mount_pose);
    const Vec2 origin = sensor.position();
    const double sigma = cfg.range_noise_sigma * weather.sensor_noise_scale;

    for (int i = 0; i < cfg.beam_count; ++i) {
        const double beam_angle = -cfg.fov / 2.0 + cfg.fov * i / cfg.beam_count;
        const double world_angle = sensor.yaw + beam_angle;
        const RayHit hit = raycast(world, agents, origin, world_angle, cfg.max_range);
        if (hit.target == RayTarget::none) continue;
        double range = hit.distance;
        if (sigma > 0.0) {
            const double noise = std::clamp(rng.normal(0.0, sigma), -3.0 * sigma, 3.0 * sigma);
            range = std::max(0.0, range + noise);
        }
        if (weather.sensor_dropout_prob > 0.0 && rng.bernoulli(weather.sensor_dropout_prob))
            continue;
        cloud.points.push_back({range * std::cos(beam_angle), range * std::sin(beam_angle)});
    }
    return cloud;
}

GpsFix read_gps(const Pose2& true_pose, const std::vector<std::vector<Vec2>>& denial_zones,
                double noise_sigma, Rng& rng) {
    GpsFix fix;
    fix.noise_sigma = noise_sigma;
    const Vec2 p = true_pose.position();
    for (const auto& zone : denial_zones) {
        if (zone.size() >= 3 && point_in_polygon(p, zone)) {
            fix.valid = false;
            return fix;
        }
    }
    fix.valid = true;
    fix.position = p;
    if (noise_sigma > 0.0) {
        fix.position.x += rng.normal(0.0, noise_sigma);
        fix.position.y += rng.normal(0.0, noise_sigma);
    }
    return fix;
}

OdometryDelta read_odometry(const VehicleState& prev, const VehicleState& curr, double dt,
                            const OdometryNoise& noise, Rng& rng) {
    OdometryDelta delta;
    delta.interval = dt;
    delta.d_translation = curr.speed * dt;
    if (noise.translation_rel_sigma > 0.0)
        delta.d_translation *= 1.0 + rng.normal(0.0, noise.translation_rel_sigma);
    delta.d_yaw = wrap_angle(curr.pose.yaw - prev.pose.yaw);
    if (noise.yaw_sigma > 0.0) delta.d_yaw += rng.normal(0.0, noise.yaw_sigma);
    return delta;
}

}  // namespace lindensim
