#include "lindensim/perception.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>

namespace lindensim {

namespace {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(std::size_t n) : parent(n) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    int find(int a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

std::vector<Cluster> cluster_points(const PointCloud& cloud, double tolerance, int min_size) {
    const auto& pts = cloud.points;
    const std::size_t n = pts.size();
    UnionFind uf(n);
    const double tol2 = tolerance * tolerance;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if ((pts[i] - pts[j]).squared_norm() <= tol2) uf.unite(i, j);
        }
    }
    std::unordered_map<int, Cluster> groups;
    for (std::size_t i = 0; i < n; ++i) groups[uf.find(static_cast<int>(i))].points.push_back(pts[i]);

    std::vector<Cluster> out;
    for (auto& [root, cluster] : groups) {
        if (static_cast<int>(cluster.points.size()) < min_size) continue;
        Vec2 sum;
        for (const auto& p : cluster.points) sum += p;
        cluster.centroid = sum / static_cast<double>(cluster.points.size());
        for (const auto& p : cluster.points)
            cluster.radius = std::max(cluster.radius, (p - cluster.centroid).norm());
        out.push_back(std::move(cluster));
    }
    std::sort(out.begin(), out.end(), [](const Cluster& a, const Cluster& b) {
        return std::atan2(a.centroid.y, a.centroid.x) < std::atan2(b.centroid.y, b.centroid.x);
    });
    return out;
}

std::string OccupancyGrid::to_text() const {
    std::string out;
    out.reserve((cfg.width + 1) * cfg.height);
    for (int iy = cfg.height - 1; iy >= 0; --iy) {
        for (int ix = 0; ix < cfg.width; ++ix) {
            const CellState s = at(ix, iy);
            out += s == CellState::free ? '.' : (s == CellState::occupied ? '#' : '?');
        }
        out += '\n';
    }
    return out;
}

OccupancyGrid build_grid(const PointCloud& cloud, const std::vector<Cluster>& clusters,
                         const GridConfig& cfg) {
    OccupancyGrid grid;
    grid.cfg = cfg;
    grid.origin = {cfg.center_ahead - cfg.width * cfg.resolution / 2.0,
                   -cfg.height * cfg.resolution / 2.0};
    grid.cells.assign(static_cast<std::size_t>(cfg.width) * cfg.height, CellState::unknown);

    // reconstruct per-beam ranges: each point belongs to its nearest beam
    std::vector<double> beam_range(cfg.beam_count, std::numeric_limits<double>::infinity());
    for (const auto& p : cloud.points) {
        const double angle = std::atan2(p.y, p.x);
        double rel = angle + cfg.fov / 2.0;
        int beam = static_cast<int>(std::llround(rel * cfg.beam_count / cfg.fov));
        beam = ((beam % cfg.beam_count) + cfg.beam_count) % cfg.beam_count;
        beam_range[beam] = std::min(beam_range[beam], p.norm());
    }

    const double step = cfg.resolution / 3.0;
    for (int b = 0; b < cfg.beam_count; ++b) {
        const double angle = -cfg.fov / 2.0 + cfg.fov * b / cfg.beam_count;
        const Vec2 dir{std::cos(angle), std::sin(angle)};
        const double range = std::min(beam_range[b], cfg.max_range);
        for (double t = 0.0; t < range; t += step) {
            const auto cell = grid.cell_of(dir * t);
            if (cell) {
                auto& c = grid.cells[cell->second * cfg.width + cell->first];
                if (c == CellState::unknown) c = CellState::free;
            }
        }
        if (std::isfinite(beam_range[b])) {
            const auto cell = grid.cell_of(dir * beam_range[b]);
            if (cell) grid.cells[cell->second * cfg.width + cell->first] = CellState::occupied;
        }
    }
    // every cluster point's cell is occupied regardless of beam assignment
    for (const auto& cluster : clusters) {
        for (const auto& p : cluster.points) {
            const auto cell = grid.cell_of(p);
            if (cell) grid.cells[cell->second * cfg.width + cell->first] = CellState::occupied;
        }
    }
    return grid;
}

namespace {

std::vector<bool> inflate_blocked(const OccupancyGrid& grid, double inflation_radius) {
    const int w = grid.cfg.width, h = grid.cfg.height;
    const int r = static_cast<int>(std::ceil(inflation_radius / grid.cfg.resolution));
    std::vector<bool> blocked(static_cast<std::size_t>(w) * h, false);
    for (int iy = 0; iy < h; ++iy) {
        for (int ix = 0; ix < w; ++ix) {
            const CellState s = grid.at(ix, iy);
            if (s == CellState::unknown) {
                blocked[iy * w + ix] = true;
            } else if (s == CellState::occupied) {
                for (int dy = -r; dy <= r; ++dy) {
                    for (int dx = -r; dx <= r; ++dx) {
                        if (dx * dx + dy * dy > r * r) continue;
                        const int nx = ix + dx, ny = iy + dy;
                        if (nx >= 0 && nx < w && ny >= 0 && ny < h) blocked[ny * w + nx] = true;
                    }
                }
            }
        }
    }
    return blocked;
}

}  // namespace

AstarResult astar_check(const OccupancyGrid& grid, const std::vector<Vec2>& window,
                        double inflation_radius) {
    AstarResult result;
    if (window.empty()) return result;

    const int w = grid.cfg.width, h = grid.cfg.height;
    const std::vector<bool> blocked = inflate_blocked(grid, inflation_radius);

    // sample the window densely; if no sample lands on a blocked cell it is clear
    bool crosses = false;
    for (std::size_t i = 0; i + 1 < window.size() && !crosses; ++i) {
        const Vec2 a = window[i], b = window[i + 1];
        const double len = (b - a).norm();
        const int steps = std::max(1, static_cast<int>(std::ceil(len / (grid.cfg.resolution / 2.0))));
        for (int k = 0; k <= steps; ++k) {
            const Vec2 p = a + (b - a) * (static_cast<double>(k) / steps);
            const auto cell = grid.cell_of(p);
            // points outside the grid are not gated (the grid covers the local area only)
            if (cell && grid.at(cell->first, cell->second) == CellState::occupied) {
                crosses = true;
                break;
            }
            if (cell && blocked[cell->second * w + cell->first] &&
                grid.at(cell->first, cell->second) != CellState::unknown) {
                crosses = true;
                break;
            }
        }
    }
    if (window.size() == 1) {
        const auto cell = grid.cell_of(window[0]);
        crosses = cell && blocked[cell->second * w + cell->first];
    }
    if (!crosses) return result;  // clear

    const auto start = grid.cell_of({0.0, 0.0});
    const auto goal = grid.cell_of(window.back());
    if (!start || !goal) {
        result.status = PathCheck::blocked;
        return result;
    }
    const int start_idx = start->second * w + start->first;
    const int goal_idx = goal->second * w + goal->first;
    if (blocked[goal_idx] || blocked[start_idx]) {
        result.status = PathCheck::blocked;
        return result;
    }

    const double res = grid.cfg.resolution;
    const double INF = std::numeric_limits<double>::infinity();
    std::vector<double> g(blocked.size(), INF);
    std::vector<int> came(blocked.size(), -1);
    using QItem = std::pair<double, int>;  // (f, idx)
    std::priority_queue<QItem, std::vector<QItem>, std::greater<>> open;

    const auto heuristic = [&](int idx) {
        const int ix = idx % w, iy = idx / w;
        const int gx = goal_idx % w, gy = goal_idx / w;
        return res * std::hypot(ix - gx, iy - gy);
    };
    g[start_idx] = 0.0;
    open.push({heuristic(start_idx), start_idx});
    const int dxs[8] = {1, -1, 0, 0, 1, 1, -1, -1};
    const int dys[8] = {0, 0, 1, -1, 1, -1, 1, -1};

    while (!open.empty()) {
        const auto [f, idx] = open.top();
        open.pop();
        if (f > g[idx] + heuristic(idx) + 1e-12) continue;
        if (idx == goal_idx) break;
        const int ix = idx % w, iy = idx / w;
        for (int k = 0; k < 8; ++k) {
            const int nx = ix + dxs[k], ny = iy + dys[k];
            if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
            const int nidx = ny * w + nx;
            if (blocked[nidx]) continue;
            const double cost = res * (k < 4 ? 1.0 : M_SQRT2);
            if (g[idx] + cost < g[nidx]) {
                g[nidx] = g[idx] + cost;
                came[nidx] = idx;
                open.push({g[nidx] + heuristic(nidx), nidx});
            }
        }
    }

    if (!std::isfinite(g[goal_idx])) {
        result.status = PathCheck::blocked;
        return result;
    }
    result.status = PathCheck::detour;
    result.cost = g[goal_idx];
    std::vector<Vec2> path;
    for (int idx = goal_idx; idx != -1; idx = came[idx])
        path.push_back(grid.cell_center(idx % w, idx / w));
    std::reverse(path.begin(), path.end());
    result.detour = std::move(path);
    return result;
}

BrakeDecision brake_check(const std::vector<Cluster>& clusters, double ego_speed,
                          const std::vector<Vec2>& path_window, double decel,
                          const BrakeConfig& cfg) {
    BrakeDecision decision;
    if (decel <= 0.0) throw std::invalid_argument("decel must be positive");
    if (path_window.size() < 2) return decision;

    const Polyline path(path_window);
    const double stopping = ego_speed * ego_speed / (2.0 * decel);

    double nearest = std::numeric_limits<double>::infinity();
    std::optional<std::size_t> nearest_idx;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        const auto [s, lateral] = path.project(clusters[i].centroid);
        if (lateral > cfg.corridor_half_width + clusters[i].radius) continue;
        const double dist = std::max(0.0, s - cfg.front_offset);
        if (dist < nearest) {
            nearest = dist;
            nearest_idx = i;
        }
    }
    if (!nearest_idx) return decision;

    decision.time_to_collision = nearest / std::max(ego_speed, cfg.min_speed_eps);
    if (stopping + cfg.margin >= nearest) {
        decision.engage = true;
        decision.trigger = nearest_idx;
    }
    return decision;
}

}  // namespace lindensim
