#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lindensim/sensors.hpp"
#include "test_support.hpp"

using namespace lindensim;

TEST_CASE("scan_lidar: empty world yields empty cloud") {
    Rng rng(1);
    const PointCloud cloud = scan_lidar(StaticWorld{}, {}, {0, 0, 0}, {}, {}, rng);
    CHECK(cloud.points.empty());
}

TEST_CASE("scan_lidar: noiseless ranges equal exact raycast, beam by beam") {
    StaticWorld world;
    world.obstacle_segments.push_back({{10, -4}, {10, 4}});
    world.obstacle_segments.push_back({{-3, -8}, {5, -8}});

    LidarConfig cfg;
    cfg.beam_count = 360;
    const Pose2 ego{1.0, 0.5, 0.3};

    Rng rng(1);
    const PointCloud cloud = scan_lidar(world, {}, ego, cfg, {}, rng);
    CHECK_FALSE(cloud.points.empty());

    // every returned point must sit exactly on a raycast hit at its beam angle
    for (const auto& p : cloud.points) {
        const double beam_angle = std::atan2(p.y, p.x);
        const double world_angle = ego.yaw + beam_angle;
        const RayHit hit = raycast(world, {}, ego.position(), world_angle, cfg.max_range);
        REQUIRE(hit.target != RayTarget::none);
        CHECK(p.norm() == doctest::Approx(hit.distance).epsilon(1e-12));
    }

    // and every beam that geometrically hits must appear in the cloud
    int expected_hits = 0;
    for (int b = 0; b < cfg.beam_count; ++b) {
        const double beam_angle = -cfg.fov / 2.0 + cfg.fov * b / cfg.beam_count;
        if (raycast(world, {}, ego.position(), ego.yaw + beam_angle, cfg.max_range).target !=
            RayTarget::none)
            ++expected_hits;
    }
    CHECK(cloud.points.size() == static_cast<std::size_t>(expected_hits));
}

TEST_CASE("scan_lidar: mount pose offsets the scan origin") {
    StaticWorld world;
    world.obstacle_segments.push_back({{10, -4}, {10, 4}});
    LidarConfig cfg;
    cfg.beam_count = 4;
    cfg.mount_pose = {1.0, 0.0, 0.0};  // 1 m ahead of the ego origin
    Rng rng(1);
    const PointCloud cloud = scan_lidar(world, {}, {0, 0, 0}, cfg, {}, rng);
    // the forward beam sees the wall 9 m from the sensor
    bool found = false;
    for (const auto& p : cloud.points)
        if (std::abs(p.y) < 1e-9 && p.x == doctest::Approx(9.0)) found = true;
    CHECK(found);
}

TEST_CASE("scan_lidar: full dropout empties the cloud") {
    const StaticWorld world = testing::street_world(30.0);
    WeatherState weather;
    weather.condition = WeatherCondition::fog;
    weather.sensor_dropout_prob = 1.0;
    Rng rng(1);
    const PointCloud cloud = scan_lidar(world, {}, {10, 0, 0}, {}, weather, rng);
    CHECK(cloud.points.empty());
}

TEST_CASE("scan_lidar: noise clipped at 3 sigma; same seed, same cloud") {
    StaticWorld world;
    world.obstacle_segments.push_back({{10, -40}, {10, 40}});
    LidarConfig cfg;
    cfg.range_noise_sigma = 0.1;

    Rng rng1(5), rng2(5);
    const PointCloud a = scan_lidar(world, {}, {0, 0, 0}, cfg, {}, rng1);
    const PointCloud b = scan_lidar(world, {}, {0, 0, 0}, cfg, {}, rng2);
    REQUIRE(a.points.size() == b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) CHECK(a.points[i] == b.points[i]);

    for (const auto& p : a.points) {
        const double beam_angle = std::atan2(p.y, p.x);
        const RayHit hit = raycast(world, {}, {0, 0}, beam_angle, cfg.max_range);
        CHECK(std::abs(p.norm() - hit.distance) <= 3.0 * cfg.range_noise_sigma + 1e-12);
    }
}

TEST_CASE("scan_lidar: agents are visible") {
    const std::vector<Footprint> agents{{{8, 0}, 0.0, 2.0, 1.0}};
    LidarConfig cfg;
    cfg.beam_count = 8;
    Rng rng(1);
    const PointCloud cloud = scan_lidar(StaticWorld{}, agents, {0, 0, 0}, cfg, {}, rng);
    REQUIRE_FALSE(cloud.points.empty());
    bool front = false;
    for (const auto& p : cloud.points)
        if (std::abs(p.y) < 1e-9 && p.x == doctest::Approx(6.0)) front = true;
    CHECK(front);
}

TEST_CASE("read_gps: truth, denial, statistics") {
    Rng rng(1);
    const GpsFix clean = read_gps({3.0, 4.0, 0.0}, {}, 0.0, rng);
    CHECK(clean.valid);
    CHECK(clean.position.x == doctest::Approx(3.0));
    CHECK(clean.position.y == doctest::Approx(4.0));

    const std::vector<std::vector<Vec2>> zones{{{0, 0}, {10, 0}, {10, 10}, {0, 10}}};
    CHECK_FALSE(read_gps({3.0, 4.0, 0.0}, zones, 0.0, rng).valid);
    CHECK(read_gps({30.0, 4.0, 0.0}, zones, 0.0, rng).valid);

    // sample std of the error per axis should track sigma
    double sx = 0.0, sx2 = 0.0;
    const int N = 10000;
    for (int i = 0; i < N; ++i) {
        const GpsFix fix = read_gps({0, 0, 0}, {}, 0.5, rng);
        sx += fix.position.x;
        sx2 += fix.position.x * fix.position.x;
    }
    const double std_x = std::sqrt(sx2 / N - (sx / N) * (sx / N));
    CHECK(std_x > 0.48);
    CHECK(std_x < 0.52);
}

TEST_CASE("read_odometry: products and yaw wrapping") {
    Rng rng(1);
    VehicleState prev, curr;
    CHECK(read_odometry(prev, curr, 0.02, {}, rng).d_translation == doctest::Approx(0.0));

    curr.speed = 5.0;
    curr.pose = {0.1, 0.0, 0.0};
    const OdometryDelta moving = read_odometry(prev, curr, 0.02, {}, rng);
    CHECK(moving.d_translation == doctest::Approx(0.1));
    CHECK(moving.d_yaw == doctest::Approx(0.0));
    CHECK(moving.interval == doctest::Approx(0.02));

    prev.pose.yaw = 3.1;
    curr.pose.yaw = -3.1;
    const OdometryDelta wrapped = read_odometry(prev, curr, 0.02, {}, rng);
    CHECK(wrapped.d_yaw == doctest::Approx(2.0 * M_PI - 6.2));  // ~ +0.0832, not -6.2
}
