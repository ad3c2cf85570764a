#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "lindensim/geometry.hpp"
#include "lindensim/sensors.hpp"

namespace lindensim {

struct NdtCell {
    int count = 0;
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();
    Eigen::Matrix2d inv_covariance = Eigen::Matrix2d::Zero();
};

struct NdtConfig {
    double cell_size = 2.0;
    int min_points_per_cell = 3;
    // eigenvalue floor as a fraction of cell_size^2
    double eigen_floor_fraction = 0.01;
    int max_iterations = 30;
    double translation_tolerance = 1e-4;  // m
    double yaw_tolerance = 1e-5;          // rad
    // Coarse seed search before the Newton loop: the floored planar Gaussians
    // give a basin narrower than typical initial error, so ndt_match scores a
    // deterministic offset lattice around the initial guess and starts from
    // the best seed. steps = 0 disables (pure Newton from the initial pose).
    // Lattice resolution must be comparable to the floored Gaussian width
    // (0.1 * cell_size across walls), or every seed scores near zero.
    double seed_search_radius = 1.2;  // m, per axis
    double seed_search_yaw = 0.2;     // rad
    int seed_search_steps = 25;       // lattice points per translation axis
    int seed_search_yaw_steps = 17;   // lattice points in yaw
};

struct NdtMap {
    double cell_size = 2.0;
    Vec2 origin;  // cell (0,0) lower-left corner
    std::unordered_map<std::int64_t, NdtCell> cells;

    std::int64_t index_of(const Eigen::Vector2d& p) const {
        const auto ix = static_cast<std::int32_t>(std::floor((p.x() - origin.x) / cell_size));
        const auto iy = static_cast<std::int32_t>(std::floor((p.y() - origin.y) / cell_size));
        return pack(ix, iy);
    }
    static std::int64_t pack(std::int32_t ix, std::int32_t iy) {
        return (static_cast<std::int64_t>(ix) << 32) |
               static_cast<std::uint32_t>(iy);
    }
    static std::pair<std::int32_t, std::int32_t> unpack(std::int64_t key) {
        return {static_cast<std::int32_t>(key >> 32), static_cast<std::int32_t>(key & 0xffffffff)};
    }
    const NdtCell* cell_at(const Eigen::Vector2d& p) const {
        const auto it = cells.find(index_of(p));
        return it != cells.end() ? &it->second : nullptr;
    }
};

struct PoseEstimate {
    Pose2 pose;
    double score = 0.0;  // summed negative per-point likelihoods
    int iterations = 0;
    bool converged = false;
};

struct Extrinsic {
    Pose2 sensor_in_ego;  // T_lidar
};

struct EmptyMapError : std::runtime_error {
    EmptyMapError() : std::runtime_error("no points to build NDT map from") {}
};

struct NoOverlapError : std::runtime_error {
    NoOverlapError()
        : std::runtime_error("no scan points fall in populated map cells; tracking lost") {}
};

/// Greedy Poisson-disk thinning over input order: retained points are pairwise
/// >= radius apart and every removed point is within radius of a retained one.
PointCloud downsample(const PointCloud& cloud, double radius);

/// Bin posed scans into cells, compute per-cell mean and covariance, discard
/// sparse cells and floor covariance eigenvalues.
NdtMap build_ndt_map(const std::vector<std::pair<PointCloud, Pose2>>& scans,
                     const NdtConfig& cfg = {});

struct ScoreResult {
    double score = 0.0;
    Eigen::Vector3d gradient = Eigen::Vector3d::Zero();
    Eigen::Matrix3d hessian = Eigen::Matrix3d::Zero();
};

/// Negative-likelihood score of the cloud under the map at pose (x, y, yaw),
/// with analytic gradient and Hessian. Points in empty cells contribute zero.
ScoreResult ndt_score(const NdtMap& map, const PointCloud& cloud, const Pose2& pose);

/// Advance the previous estimate by the odometry delta (translation along the
/// previous heading, then rotation).
Pose2 predict_initial(const Pose2& prev, const OdometryDelta& odo);

/// Newton iteration on ndt_score with positive-definite Hessian correction.
/// Throws NoOverlapError when no point lands in a populated cell at the
/// initial pose.
PoseEstimate ndt_match(const NdtMap& map, const PointCloud& cloud, const Pose2& initial,
                       const NdtConfig& cfg = {});

/// Sensor-in-map pose composed with the inverse extrinsic: the ego pose.
Pose2 sensor_to_ego(const Pose2& sensor_in_map, const Extrinsic& ext);

}  // namespace lindensim
