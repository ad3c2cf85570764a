#pragma once

#include <vector>

#include "lindensim/geometry.hpp"
#include "lindensim/rng.hpp"
#include "lindensim/vehicle.hpp"
#include "lindensim/world.hpp"

namespace lindensim {

struct LidarConfig {
    int beam_count = 360;
    double fov = 2.0 * M_PI;
    double max_range = 50.0;
    double range_noise_sigma = 0.0;
    Pose2 mount_pose;  // sensor in ego frame (T_lidar)
};

struct PointCloud {
    std::vector<Vec2> points;  // sensor frame
    double stamp = 0.0;
};

struct GpsFix {
    Vec2 position;
    bool valid = false;
    double noise_sigma = 0.0;
};

struct OdometryDelta {
    double d_translation = 0.0;
    double d_yaw = 0.0;
    double interval = 0.0;
};

/// One ray per beam from the mounted sensor pose. Hit ranges get Gaussian noise
/// clipped at +/-3 sigma; misses are omitted; each hit is independently dropped
/// with the weather dropout probability. The caller supplies agent footprints
/// excluding the ego's own body.
PointCloud scan_lidar(const StaticWorld& world, const std::vector<Footprint>& agents,
                      const Pose2& ego_pose, const LidarConfig& cfg,
                      const WeatherState& weather, Rng& rng, double stamp = 0.0);

/// GPS fix: invalid inside any denial polygon, otherwise truth plus per-axis
/// Gaussian noise.
GpsFix read_gps(const Pose2& true_pose, const std::vector<std::vector<Vec2>>& denial_zones,
                double noise_sigma, Rng& rng);

struct OdometryNoise {
    double translation_rel_sigma = 0.0;  // multiplicative on d_translation
    double yaw_sigma = 0.0;              // additive, rad
};

OdometryDelta read_odometry(const VehicleState& prev, const VehicleState& curr, double dt,
                            const OdometryNoise& noise, Rng& rng);

}  // namespace lindensim
