#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <queue>

#include "lindensim/perception.hpp"
#include "lindensim/rng.hpp"

using namespace lindensim;

namespace {

// Independent connected-components oracle (BFS on the <=tolerance graph).
std::vector<std::vector<int>> cc_oracle(const std::vector<Vec2>& pts, double tol) {
    const int n = static_cast<int>(pts.size());
    std::vector<int> label(n, -1);
    std::vector<std::vector<int>> comps;
    for (int i = 0; i < n; ++i) {
        if (label[i] != -1) continue;
        std::vector<int> comp;
        std::queue<int> q;
        q.push(i);
        label[i] = static_cast<int>(comps.size());
        while (!q.empty()) {
            const int u = q.front();
            q.pop();
            comp.push_back(u);
            for (int v = 0; v < n; ++v) {
                if (label[v] == -1 && (pts[u] - pts[v]).norm() <= tol) {
                    label[v] = label[i];
                    q.push(v);
                }
            }
        }
        comps.push_back(std::move(comp));
    }
    return comps;
}

}  // namespace

TEST_CASE("cluster_points: separation, size filter, inclusive linkage") {
    PointCloud cloud;
    for (int i = 0; i < 5; ++i) cloud.points.push_back({2.0 + 0.04 * i, 0.0});
    for (int i = 0; i < 5; ++i) cloud.points.push_back({7.0 + 0.04 * i, 0.0});
    CHECK(cluster_points(cloud, 0.5, 3).size() == 2);

    PointCloud pair;
    pair.points = {{1, 0}, {5, 0}};
    CHECK(cluster_points(pair, 0.5, 3).empty());

    // chain spaced exactly at the tolerance links into one cluster
    PointCloud chain;
    for (int i = 0; i < 6; ++i) chain.points.push_back({0.5 * i, 0.0});
    const auto clusters = cluster_points(chain, 0.5, 3);
    REQUIRE(clusters.size() == 1);
    CHECK(clusters[0].points.size() == 6);
    CHECK(clusters[0].centroid.x == doctest::Approx(1.25));
    CHECK(clusters[0].radius == doctest::Approx(1.25));
}

TEST_CASE("cluster_points equals union-find components on random clouds") {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        PointCloud cloud;
        const int n = static_cast<int>(rng.uniform_int(0, 400));
        for (int i = 0; i < n; ++i)
            cloud.points.push_back({rng.uniform(-15, 15), rng.uniform(-15, 15)});
        const double tol = rng.uniform(0.3, 2.0);
        const int min_size = static_cast<int>(rng.uniform_int(1, 4));

        auto comps = cc_oracle(cloud.points, tol);
        std::size_t expected = 0;
        std::vector<std::size_t> expected_sizes;
        for (const auto& c : comps)
            if (static_cast<int>(c.size()) >= min_size) {
                ++expected;
                expected_sizes.push_back(c.size());
            }

        const auto clusters = cluster_points(cloud, tol, min_size);
        REQUIRE(clusters.size() == expected);
        std::vector<std::size_t> got_sizes;
        for (const auto& c : clusters) got_sizes.push_back(c.points.size());
        std::sort(expected_sizes.begin(), expected_sizes.end());
        std::sort(got_sizes.begin(), got_sizes.end());
        CHECK(got_sizes == expected_sizes);
    }
}

TEST_CASE("build_grid: empty cloud marks in-range cells free") {
    GridConfig cfg;
    const OccupancyGrid grid = build_grid(PointCloud{}, {}, cfg);
    int occupied = 0, unknown = 0;
    for (const auto c : grid.cells) {
        if (c == CellState::occupied) ++occupied;
        if (c == CellState::unknown) ++unknown;
    }
    CHECK(occupied == 0);
    CHECK(unknown == 0);  // the whole 30 m grid sits inside the 50 m scan range
}

TEST_CASE("build_grid: single beam semantics") {
    GridConfig cfg;
    cfg.beam_count = 2;  // beams at -pi and 0: one exact forward beam
    PointCloud cloud;
    cloud.points = {{5.0, 0.0}};
    const OccupancyGrid grid = build_grid(cloud, {}, cfg);

    const auto ret = grid.cell_of({5.0, 0.0});
    REQUIRE(ret.has_value());
    CHECK(grid.at(ret->first, ret->second) == CellState::occupied);

    const auto before = grid.cell_of({3.0, 0.0});
    REQUIRE(before.has_value());
    CHECK(grid.at(before->first, before->second) == CellState::free);

    const auto beyond = grid.cell_of({8.0, 0.0});
    REQUIRE(beyond.has_value());
    CHECK(grid.at(beyond->first, beyond->second) == CellState::unknown);

    const auto off_beam = grid.cell_of({5.0, 5.0});
    REQUIRE(off_beam.has_value());
    CHECK(grid.at(off_beam->first, off_beam->second) == CellState::unknown);
}

TEST_CASE("build_grid: soundness against a noiseless wall") {
    // wall of points across x = 8
    PointCloud cloud;
    std::vector<Vec2> wall;
    for (double y = -10.0; y <= 10.0; y += 0.1) wall.push_back({8.0, y});
    cloud.points = wall;
    const auto clusters = cluster_points(cloud, 0.3, 3);
    const OccupancyGrid grid = build_grid(cloud, clusters);

    // every cell containing a wall point is occupied, never free
    for (const auto& p : wall) {
        const auto cell = grid.cell_of(p);
        if (!cell) continue;
        CHECK(grid.at(cell->first, cell->second) == CellState::occupied);
    }
    // cells well behind the wall (from the sensor at origin) are not free
    for (double y = -5.0; y <= 5.0; y += 0.5) {
        const auto cell = grid.cell_of({12.0, y});
        REQUIRE(cell.has_value());
        CHECK(grid.at(cell->first, cell->second) != CellState::free);
    }
    // cells in front of the wall on observed beams are free
    const auto front = grid.cell_of({4.0, 0.0});
    REQUIRE(front.has_value());
    CHECK(grid.at(front->first, front->second) == CellState::free);
}

TEST_CASE("astar_check: clear, blocked, detour") {
    GridConfig cfg;
    const std::vector<Vec2> window{{0, 0}, {5, 0}, {10, 0}};

    const OccupancyGrid open = build_grid(PointCloud{}, {}, cfg);
    CHECK(astar_check(open, window, 1.0).status == PathCheck::clear);

    // full wall across the grid: no way around
    PointCloud wall;
    for (double y = -16.0; y <= 16.0; y += 0.2) wall.points.push_back({6.0, y});
    const OccupancyGrid walled = build_grid(wall, cluster_points(wall, 0.3, 3), cfg);
    CHECK(astar_check(walled, window, 1.0).status == PathCheck::blocked);

    // small blob on the path in an otherwise open grid: detour
    PointCloud blob;
    for (double y = -0.4; y <= 0.4; y += 0.2)
        for (double x = 5.8; x <= 6.2; x += 0.2) blob.points.push_back({x, y});
    const OccupancyGrid blobbed = build_grid(blob, cluster_points(blob, 0.3, 3), cfg);
    const AstarResult detour = astar_check(blobbed, window, 1.0);
    REQUIRE(detour.status == PathCheck::detour);
    CHECK(detour.cost >= 10.0 - 0.5);  // at least straight-line length minus one cell
    REQUIRE_FALSE(detour.detour.empty());
    // the detour keeps clear of the blob
    for (const auto& p : detour.detour) CHECK((p - Vec2{6.0, 0.0}).norm() >= 1.0 - 0.71);
}

TEST_CASE("astar_check detours are cost-optimal vs exhaustive Dijkstra") {
    Rng rng(17);
    GridConfig cfg;
    cfg.width = 30;
    cfg.height = 30;
    cfg.resolution = 0.5;
    cfg.center_ahead = 7.0;  // keep the ego cell inside the 15 m grid
    int detours = 0;
    for (int trial = 0; trial < 20; ++trial) {
        // random blobs strewn near the straight window
        PointCloud cloud;
        const int blobs = static_cast<int>(rng.uniform_int(1, 5));
        for (int b = 0; b < blobs; ++b) {
            const Vec2 c{rng.uniform(2, 12), rng.uniform(-3, 3)};
            for (int k = 0; k < 12; ++k)
                cloud.points.push_back(c + Vec2{rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)});
        }
        const OccupancyGrid grid = build_grid(cloud, cluster_points(cloud, 0.4, 3), cfg);
        const std::vector<Vec2> window{{0, 0}, {13, 0}};
        const AstarResult result = astar_check(grid, window, 0.8);
        if (result.status != PathCheck::detour) continue;
        ++detours;

        // exhaustive Dijkstra over the same inflated grid
        const int w = cfg.width, h = cfg.height;
        const int r = static_cast<int>(std::ceil(0.8 / cfg.resolution));
        std::vector<bool> blocked(w * h, false);
        for (int iy = 0; iy < h; ++iy)
            for (int ix = 0; ix < w; ++ix) {
                if (grid.at(ix, iy) == CellState::unknown) blocked[iy * w + ix] = true;
                if (grid.at(ix, iy) == CellState::occupied)
                    for (int dy = -r; dy <= r; ++dy)
                        for (int dx = -r; dx <= r; ++dx) {
                            if (dx * dx + dy * dy > r * r) continue;
                            const int nx = ix + dx, ny = iy + dy;
                            if (nx >= 0 && nx < w && ny >= 0 && ny < h)
                                blocked[ny * w + nx] = true;
                        }
            }
        const auto start = grid.cell_of({0, 0});
        const auto goal = grid.cell_of({13, 0});
        REQUIRE(start.has_value());
        REQUIRE(goal.has_value());
        std::vector<double> dist(w * h, 1e300);
        using QI = std::pair<double, int>;
        std::priority_queue<QI, std::vector<QI>, std::greater<>> q;
        dist[start->second * w + start->first] = 0.0;
        q.push({0.0, start->second * w + start->first});
        const int dxs[8] = {1, -1, 0, 0, 1, 1, -1, -1};
        const int dys[8] = {0, 0, 1, -1, 1, -1, 1, -1};
        while (!q.empty()) {
            const auto [d, idx] = q.top();
            q.pop();
            if (d > dist[idx]) continue;
            for (int k = 0; k < 8; ++k) {
                const int nx = idx % w + dxs[k], ny = idx / w + dys[k];
                if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                if (blocked[ny * w + nx]) continue;
                const double nd = d + cfg.resolution * (k < 4 ? 1.0 : M_SQRT2);
                if (nd < dist[ny * w + nx]) {
                    dist[ny * w + nx] = nd;
                    q.push({nd, ny * w + nx});
                }
            }
        }
        CHECK(result.cost == doctest::Approx(dist[goal->second * w + goal->first]));
    }
    CHECK(detours >= 3);  // the comparison must not be vacuous
}

TEST_CASE("brake_check: spec arithmetic and gating") {
    const std::vector<Vec2> path{{0, 0}, {20, 0}};

    CHECK_FALSE(brake_check({}, 8.0, path, 6.0).engage);

    Cluster ahead;
    ahead.points = {{5.0, 0.0}};
    ahead.centroid = {5.0, 0.0};
    // stopping distance 64/12 = 5.33 m > 5 m: engage
    const BrakeDecision hit = brake_check({ahead}, 8.0, path, 6.0);
    CHECK(hit.engage);
    REQUIRE(hit.time_to_collision.has_value());
    CHECK(*hit.time_to_collision == doctest::Approx(5.0 / 8.0));
    CHECK(hit.trigger == 0);

    Cluster offside = ahead;
    offside.centroid = {5.0, 3.0};
    offside.points = {{5.0, 3.0}};
    CHECK_FALSE(brake_check({offside}, 8.0, path, 6.0).engage);

    // monotone in speed: engaging at v implies engaging at any higher v
    for (double v = 0.5; v < 15.0; v += 0.5) {
        if (brake_check({ahead}, v, path, 6.0).engage) {
            CHECK(brake_check({ahead}, v + 1.0, path, 6.0).engage);
            CHECK(brake_check({ahead}, v + 5.0, path, 6.0).engage);
        }
    }
}

TEST_CASE("brake_check: rejects non-positive decel") {
    CHECK_THROWS_AS(brake_check({}, 5.0, {{0, 0}, {10, 0}}, 0.0), std::invalid_argument);
}
