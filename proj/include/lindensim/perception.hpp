#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lindensim/geometry.hpp"
#include "lindensim/sensors.hpp"

namespace lindensim {

struct Cluster {
    std::vector<Vec2> points;  // ego frame
    Vec2 centroid;
    double radius = 0.0;  // max point distance from centroid
};

/// Single-linkage connected components under distance <= tolerance; components
/// below min_size are discarded; output ordered by centroid angle.
std::vector<Cluster> cluster_points(const PointCloud& cloud, double tolerance, int min_size);

enum class CellState : std::uint8_t { unknown = 0, free = 1, occupied = 2 };

struct GridConfig {
    double resolution = 0.5;   // m/cell
    int width = 60;            // cells (x, forward)
    int height = 60;           // cells (y, lateral)
    double center_ahead = 10.0;  // grid center this far ahead of the ego
    int beam_count = 360;
    double fov = 2.0 * M_PI;
    double max_range = 50.0;
};

struct OccupancyGrid {
    GridConfig cfg;
    Vec2 origin;  // ego-frame position of cell (0,0) lower-left corner
    std::vector<CellState> cells;  // row-major, index = iy * width + ix

    CellState at(int ix, int iy) const { return cells[iy * cfg.width + ix]; }
    bool in_bounds(int ix, int iy) const {
        return ix >= 0 && ix < cfg.width && iy >= 0 && iy < cfg.height;
    }
    std::optional<std::pair<int, int>> cell_of(const Vec2& p) const {
        const int ix = static_cast<int>(std::floor((p.x - origin.x) / cfg.resolution));
        const int iy = static_cast<int>(std::floor((p.y - origin.y) / cfg.resolution));
        if (!in_bounds(ix, iy)) return std::nullopt;
        return std::make_pair(ix, iy);
    }
    /// Center of cell (ix, iy) in the ego frame.
    Vec2 cell_center(int ix, int iy) const {
        return {origin.x + (ix + 0.5) * cfg.resolution, origin.y + (iy + 0.5) * cfg.resolution};
    }
    /// Debug dump: one char per cell ('.' free, '#' occupied, '?' unknown).
    std::string to_text() const;
};

/// Ray-trace each beam through the grid: cells strictly before a return are
/// free, the return cell occupied, beyond unknown; beams with no return mark
/// free out to max_range. The sensor sits at the ego-frame origin.
OccupancyGrid build_grid(const PointCloud& cloud, const std::vector<Cluster>& clusters,
                         const GridConfig& cfg = {});

enum class PathCheck { clear, blocked, detour };

struct AstarResult {
    PathCheck status = PathCheck::clear;
    std::vector<Vec2> detour;  // ego-frame cell centers, when status == detour
    double cost = 0.0;         // meters, octile metric
};

/// Check a local route window (ego-frame polyline) against the grid. Clear when
/// it crosses no inflated-occupied cell; otherwise 8-connected A* (Euclidean
/// heuristic, unknown treated as blocked, obstacles inflated by the given
/// radius) from the ego cell to the window end.
AstarResult astar_check(const OccupancyGrid& grid, const std::vector<Vec2>& window,
                        double inflation_radius);

struct BrakeConfig {
    double corridor_half_width = 1.5;  // m, lateral gate around the path
    double margin = 0.5;               // m added to the stopping distance
    double min_speed_eps = 0.1;        // m/s, TTC divisor floor
    double front_offset = 0.0;         // m, ego origin to front bumper
};

struct BrakeDecision {
    bool engage = false;
    std::optional<double> time_to_collision;
    std::optional<std::size_t> trigger;  // cluster index
};

/// Emergency-brake check: for clusters inside the swept path corridor, engage
/// when the stopping distance v^2/(2 decel) plus margin reaches the obstacle.
BrakeDecision brake_check(const std::vector<Cluster>& clusters, double ego_speed,
                          const std::vector<Vec2>& path_window, double decel,
                          const BrakeConfig& cfg = {});

}  // namespace lindensim
