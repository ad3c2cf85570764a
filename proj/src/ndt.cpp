#include "lindensim/ndt.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace lindensim {

PointCloud downsample(const PointCloud& cloud, double radius) {
    if (radius <= 0.0) throw std::invalid_argument("downsample radius must be positive");
    PointCloud out;
    out.stamp = cloud.stamp;

    // uniform grid with cell edge = radius; any point closer than radius lies
    // in the same or an adjacent cell, so a 3x3 neighborhood check is exact
    std::unordered_map<std::int64_t, std::vector<Vec2>> grid;
    const auto key = [radius](int ix, int iy) {
        return (static_cast<std::int64_t>(ix) << 32) | static_cast<std::uint32_t>(iy);
    };
    const double r2 = radius * radius;

    for (const auto& p : cloud.points) {
        const int ix = static_cast<int>(std::floor(p.x / radius));
        const int iy = static_cast<int>(std::floor(p.y / radius));
        bool keep = true;
        for (int dx = -1; dx <= 1 && keep; ++dx) {
            for (int dy = -1; dy <= 1 && keep; ++dy) {
                const auto it = grid.find(key(ix + dx, iy + dy));
                if (it == grid.end()) continue;
                for (const auto& q : it->second) {
                    if ((p - q).squared_norm() < r2) {
                        keep = false;
                        break;
                    }
                }
            }
        }
        if (keep) {
            grid[key(ix, iy)].push_back(p);
            out.points.push_back(p);
        }
    }
    return out;
}

NdtMap build_ndt_map(const std::vector<std::pair<PointCloud, Pose2>>& scans,
                     const NdtConfig& cfg) {
    if (cfg.cell_size <= 0.0) throw std::invalid_argument("cell_size must be positive");

    NdtMap map;
    map.cell_size = cfg.cell_size;
    map.origin = {0.0, 0.0};

    struct Accum {
        int count = 0;
        Eigen::Vector2d sum = Eigen::Vector2d::Zero();
        Eigen::Matrix2d sum_outer = Eigen::Matrix2d::Zero();
    };
    // ordered map keeps cell iteration deterministic
    std::map<std::int64_t, Accum> accum;

    std::size_t total = 0;
    for (const auto& [cloud, pose] : scans) {
        for (const auto& sp : cloud.points) {
            const Vec2 wp = pose.transform(sp);
            const Eigen::Vector2d p(wp.x, wp.y);
            auto& a = accum[map.index_of(p)];
            a.count += 1;
            a.sum += p;
            a.sum_outer += p * p.transpose();
            ++total;
        }
    }
    if (total == 0) throw EmptyMapError();

    const double eigen_floor = cfg.eigen_floor_fraction * cfg.cell_size * cfg.cell_size;
    for (const auto& [idx, a] : accum) {
        if (a.count < cfg.min_points_per_cell) continue;
        NdtCell cell;
        cell.count = a.count;
        cell.mean = a.sum / a.count;
        Eigen::Matrix2d cov = a.sum_outer / a.count - cell.mean * cell.mean.transpose();
        // symmetrize, then floor the eigenvalues
        cov = 0.5 * (cov + cov.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
        Eigen::Vector2d evals = es.eigenvalues().cwiseMax(eigen_floor);
        const Eigen::Matrix2d& evecs = es.eigenvectors();
        cell.covariance = evecs * evals.asDiagonal() * evecs.transpose();
        cell.inv_covariance =
            evecs * evals.cwiseInverse().asDiagonal() * evecs.transpose();
        map.cells.emplace(idx, std::move(cell));
    }
    return map;
}

ScoreResult ndt_score(const NdtMap& map, const PointCloud& cloud, const Pose2& pose) {
    ScoreResult res;
    const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);

    for (const auto& p : cloud.points) {
        const Eigen::Vector2d tp(pose.x + c * p.x - s * p.y, pose.y + s * p.x + c * p.y);
        const NdtCell* cell = map.cell_at(tp);
        if (!cell) continue;

        const Eigen::Vector2d d = tp - cell->mean;
        const Eigen::Vector2d q = cell->inv_covariance * d;
        const double e = std::exp(-0.5 * d.dot(q));

        // Jacobian columns of the transformed point wrt (x, y, yaw)
        const Eigen::Vector2d j_yaw(-s * p.x - c * p.y, c * p.x - s * p.y);
        Eigen::Matrix<double, 2, 3> J;
        J << 1.0, 0.0, j_yaw.x(), 0.0, 1.0, j_yaw.y();

        const Eigen::Vector3d qJ = J.transpose() * q;  // (q^T J_i)
        res.score += -e;
        res.gradient += e * qJ;

        // d2(point)/dyaw2 = -R(yaw) p
        const Eigen::Vector2d j_yaw2(-(c * p.x - s * p.y), -(s * p.x + c * p.y));
        Eigen::Matrix3d H = -qJ * qJ.transpose() + J.transpose() * cell->inv_covariance * J;
        H(2, 2) += q.dot(j_yaw2);
        res.hessian += e * H;
    }
    return res;
}

Pose2 predict_initial(const Pose2& prev, const OdometryDelta& odo) {
    Pose2 out = prev;
    out.x += odo.d_translation * std::cos(prev.yaw);
    out.y += odo.d_translation * std::sin(prev.yaw);
    out.yaw = wrap_angle(prev.yaw + odo.d_yaw);
    return out;
}

namespace {

double score_only(const NdtMap& map, const PointCloud& cloud, const Pose2& pose) {
    double score = 0.0;
    const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
    for (const auto& p : cloud.points) {
        const Eigen::Vector2d tp(pose.x + c * p.x - s * p.y, pose.y + s * p.x + c * p.y);
        const NdtCell* cell = map.cell_at(tp);
        if (!cell) continue;
        const Eigen::Vector2d d = tp - cell->mean;
        score += -std::exp(-0.5 * d.dot(cell->inv_covariance * d));
    }
    return score;
}

int overlap_count(const NdtMap& map, const PointCloud& cloud, const Pose2& pose) {
    int n = 0;
    const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
    for (const auto& p : cloud.points) {
        const Eigen::Vector2d tp(pose.x + c * p.x - s * p.y, pose.y + s * p.x + c * p.y);
        if (map.cell_at(tp)) ++n;
    }
    return n;
}

}  // namespace

PoseEstimate ndt_match(const NdtMap& map, const PointCloud& cloud, const Pose2& initial,
                       const NdtConfig& cfg) {
    if (map.cells.empty()) throw EmptyMapError();
    if (overlap_count(map, cloud, initial) == 0) throw NoOverlapError();

    PoseEstimate est;
    est.pose = initial;
    double current_score = score_only(map, cloud, est.pose);

    if (cfg.seed_search_steps > 1 && cfg.seed_search_yaw_steps > 1) {
        const int n = cfg.seed_search_steps;
        const int m = cfg.seed_search_yaw_steps;
        for (int ix = 0; ix < n; ++ix) {
            const double dx = -cfg.seed_search_radius + 2.0 * cfg.seed_search_radius * ix / (n - 1);
            for (int iy = 0; iy < n; ++iy) {
                const double dy =
                    -cfg.seed_search_radius + 2.0 * cfg.seed_search_radius * iy / (n - 1);
                for (int iw = 0; iw < m; ++iw) {
                    const double dw =
                        -cfg.seed_search_yaw + 2.0 * cfg.seed_search_yaw * iw / (m - 1);
                    const Pose2 seed{initial.x + dx, initial.y + dy,
                                     wrap_angle(initial.yaw + dw)};
                    const double s = score_only(map, cloud, seed);
                    if (s < current_score) {
                        current_score = s;
                        est.pose = seed;
                    }
                }
            }
        }
    }

    double lambda = 1e-6;  // damping carried across iterations
    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        est.iterations = iter + 1;
        const ScoreResult sr = ndt_score(map, cloud, est.pose);

        // damped Newton: add lambda*I until the solve succeeds AND the step
        // improves the score; accepted steps relax the damping again
        Eigen::Vector3d applied = Eigen::Vector3d::Zero();
        bool accepted = false;
        while (lambda < 1e10) {
            const Eigen::Matrix3d H = sr.hessian + lambda * Eigen::Matrix3d::Identity();
            Eigen::LLT<Eigen::Matrix3d> llt(H);
            if (llt.info() != Eigen::Success) {
                lambda *= 10.0;
                continue;
            }
            const Eigen::Vector3d delta = llt.solve(-sr.gradient);
            const Pose2 candidate{est.pose.x + delta.x(), est.pose.y + delta.y(),
                                  wrap_angle(est.pose.yaw + delta.z())};
            const double candidate_score = score_only(map, cloud, candidate);
            if (candidate_score < current_score) {
                est.pose = candidate;
                current_score = candidate_score;
                applied = delta;
                accepted = true;
                lambda = std::max(lambda * 0.25, 1e-6);
                break;
            }
            lambda *= 10.0;
        }

        if (accepted && std::abs(applied.x()) < cfg.translation_tolerance &&
            std::abs(applied.y()) < cfg.translation_tolerance &&
            std::abs(applied.z()) < cfg.yaw_tolerance) {
            est.converged = true;
            break;
        }
        if (!accepted) {
            // no improving step exists at any damping: local optimum
            est.converged = true;
            break;
        }
    }
    est.score = current_score;
    return est;
}

Pose2 sensor_to_ego(const Pose2& sensor_in_map, const Extrinsic& ext) {
    return compose(sensor_in_map, inverse(ext.sensor_in_ego));
}

}  // namespace lindensim
