// Copyright 2026 The trilift Authors
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "trilift/geometry.hpp"
#include "trilift/rng.hpp"

using namespace trilift;

#include "geometry_oracle.hpp"

using trilift_test::MarchVerdict;
using trilift_test::box_sdf;
using trilift_test::march_box;
using trilift_test::random_unit;

TEST_CASE("pixel_ray examples") {
  CameraIntrinsics cam(100, 100, 50, 50, 100, 100);
  RigidPose identity;

  SECTION("principal point gives the optical axis") {
    Ray r = pixel_ray(cam, identity, {50, 50});
    CHECK(r.direction.x == Catch::Approx(0).margin(1e-12));
    CHECK(r.direction.y == Catch::Approx(0).margin(1e-12));
    CHECK(r.direction.z == Catch::Approx(1).margin(1e-12));
  }

  SECTION("one focal length off axis gives 45 degrees") {
    CameraIntrinsics wide(100, 100, 50, 50, 200, 100);
    Ray r = pixel_ray(wide, identity, {150, 50});
    CHECK(r.direction.x == Catch::Approx(1 / std::sqrt(2.0)));
    CHECK(r.direction.y == Catch::Approx(0).margin(1e-12));
    CHECK(r.direction.z == Catch::Approx(1 / std::sqrt(2.0)));
  }

  SECTION("out-of-bounds pixel is a domain error") {
    CHECK_THROWS_AS(pixel_ray(cam, identity, {-3, 50}), std::domain_error);
    CHECK_THROWS_AS(pixel_ray(cam, identity, {50, 101}), std::domain_error);
  }

  SECTION("project-unproject round trip at arbitrary pose") {
    Rng rng(7);
    for (int i = 0; i < 50; ++i) {
      RigidPose pose = pose_from_azel(rng.uniform(0, 2 * kPi), rng.uniform(0, 0.4),
                                      rng.uniform(2.0, 6.0));
      Vec2 px{rng.uniform(1.0, 99.0), rng.uniform(1.0, 99.0)};
      Ray r = pixel_ray(cam, pose, px);
      Vec3 p = r.origin + r.direction * 10.0;
      auto back = project(cam, pose, p);
      REQUIRE(back.has_value());
      CHECK(back->x == Catch::Approx(px.x).margin(1e-6));
      CHECK(back->y == Catch::Approx(px.y).margin(1e-6));
    }
  }

  SECTION("generated directions are unit length") {
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
      RigidPose pose = pose_from_azel(rng.uniform(0, 2 * kPi), rng.uniform(0, 0.3), 4.0);
      Ray r = pixel_ray(cam, pose, {rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0)});
      CHECK(std::abs(norm(r.direction) - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("ray_aabb slab intersection") {
  SECTION("head-on hit of the unit cube") {
    Ray r;
    r.origin = {0, 0, -3};
    r.direction = {0, 0, 1};
    auto hit = ray_unit_cube(r);
    REQUIRE(hit.has_value());
    CHECK(hit->first == Catch::Approx(2.0));
    CHECK(hit->second == Catch::Approx(4.0));
  }

  SECTION("parallel ray outside the slab misses") {
    Ray r;
    r.origin = {0, 5, 0};
    r.direction = {1, 0, 0};
    CHECK_FALSE(ray_unit_cube(r).has_value());
  }

  SECTION("parallel ray inside the slab passes") {
    Ray r;
    r.origin = {0, 0.5, -4};
    r.direction = {0, 0, 1};
    auto hit = ray_unit_cube(r);
    REQUIRE(hit.has_value());
    CHECK(hit->first == Catch::Approx(3.0));
  }

  SECTION("origin inside the box clamps entry to zero") {
    Ray r;
    r.origin = {0.2, -0.1, 0};
    r.direction = {0, 0, 1};
    auto hit = ray_unit_cube(r);
    REQUIRE(hit.has_value());
    CHECK(hit->first == 0.0);
    CHECK(hit->second == Catch::Approx(1.0));
  }

  SECTION("entry and exit points lie on the box surface") {
    Rng rng(11);
    BoxPose box;
    box.x = 0.4;
    box.y = -0.2;
    box.z = 0.7;
    box.l = 1.8;
    box.h = 0.9;
    box.w = 1.1;
    box.theta = 0.6;
    int hits = 0;
    for (int i = 0; i < 500; ++i) {
      Ray r;
      r.origin = {rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4)};
      Vec3 aim{box.x + rng.uniform(-1, 1), box.y + rng.uniform(-0.5, 0.5),
               box.z + rng.uniform(-0.7, 0.7)};
      r.direction = normalized(aim - r.origin);
      auto hit = ray_box(r, box);
      if (!hit || hit->first == 0.0) continue;
      ++hits;
      for (double t : {hit->first, hit->second}) {
        Vec3 p = r.origin + r.direction * t;
        CHECK(std::abs(box_sdf(p, box)) < 1e-6);
      }
    }
    CHECK(hits > 20);
  }

  SECTION("1000 random rays against the cube match the march oracle") {
    Rng rng(2024);
    BoxPose cube = BoxPose{};
    cube.l = cube.w = cube.h = 2.0;
    int unresolved = 0;
    for (int i = 0; i < 1000; ++i) {
      Ray r;
      r.origin = {rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4)};
      r.direction = random_unit(rng);
      double t_max = norm(r.origin) + 4.0;
      MarchVerdict v = march_box(r.origin, r.direction, cube, t_max);
      auto hit = ray_unit_cube(r);
      if (v.kind == MarchVerdict::Hit) {
        REQUIRE(hit.has_value());
        CHECK(hit->first == Catch::Approx(v.entry_t).margin(1e-3));
      } else if (v.kind == MarchVerdict::Miss) {
        CHECK_FALSE(hit.has_value());
      } else {
        ++unresolved;
      }
    }
    CHECK(unresolved < 20);
  }
}

TEST_CASE("normalize_to_box") {
  BoxPose box;
  box.x = 1.0;
  box.y = 2.0;
  box.z = 3.0;
  box.l = 4.0;
  box.h = 2.0;
  box.w = 1.5;

  SECTION("center maps to the origin") {
    Vec3 n = normalize_to_box({1, 2, 3}, box);
    CHECK(norm(n) < 1e-12);
  }

  SECTION("corner maps to (1,1,1) at zero yaw") {
    Vec3 n = normalize_to_box({1 + 2.0, 2 + 1.0, 3 + 0.75}, box);
    CHECK(n.x == Catch::Approx(1.0));
    CHECK(n.y == Catch::Approx(1.0));
    CHECK(n.z == Catch::Approx(1.0));
  }

  SECTION("outside point is a domain error") {
    CHECK_THROWS_AS(normalize_to_box({1 + 2.1, 2, 3}, box), std::domain_error);
  }

  SECTION("round trip under yaw pi/3") {
    box.theta = kPi / 3;
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
      Vec3 n{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      Vec3 p = denormalize_from_box(n, box);
      Vec3 n2 = normalize_to_box(p, box);
      CHECK(norm(n2 - n) < 1e-9);
    }
  }
}

TEST_CASE("ipm_ground") {
  SECTION("nadir camera sees the point directly below") {
    // Camera at height 5 looking straight down (-y view direction; ground y=0).
    Mat3 r = Mat3::from_cols({1, 0, 0}, {0, 0, 1}, {0, -1, 0});
    RigidPose pose(r, {2.0, 5.0, -1.0});
    CameraIntrinsics cam(80, 80, 32, 32, 64, 64);
    auto bev = ipm_ground(cam, pose, 0.0, {32, 32});
    REQUIRE(bev.has_value());
    CHECK(bev->x == Catch::Approx(2.0).margin(1e-9));
    CHECK(bev->y == Catch::Approx(-1.0).margin(1e-9));
  }

  SECTION("horizon pixel never meets the plane") {
    // Level camera in a y-down frame: ground at y = +1.65.
    RigidPose pose;
    CameraIntrinsics cam(100, 100, 50, 50, 100, 100);
    CHECK_FALSE(ipm_ground(cam, pose, 1.65, {30.0, 50.0}).has_value());  // exactly level
    CHECK_FALSE(ipm_ground(cam, pose, 1.65, {50.0, 20.0}).has_value());  // above horizon
  }

  SECTION("forward camera round-trips below-horizon pixels") {
    RigidPose pose;  // identity: camera frame, y down, ground below camera
    CameraIntrinsics cam(721.5, 721.5, 609.6, 172.8, 1242, 375);
    double ground = 1.65;
    Rng rng(9);
    int checked = 0;
    for (int i = 0; i < 100; ++i) {
      Vec2 px{rng.uniform(1.0, 1241.0), rng.uniform(180.0, 374.0)};
      auto bev = ipm_ground(cam, pose, ground, px);
      if (!bev) continue;
      ++checked;
      Vec3 p{bev->x, ground, bev->y};
      CHECK(std::abs(p.y - ground) < 1e-9);
      auto back = project(cam, pose, p);
      REQUIRE(back.has_value());
      CHECK(back->x == Catch::Approx(px.x).margin(1e-6));
      CHECK(back->y == Catch::Approx(px.y).margin(1e-6));
    }
    CHECK(checked > 50);
  }
}

TEST_CASE("sample_view_schedule") {
  SECTION("single canonical view sits at (0,0,-radius)") {
    ViewSchedule s;
    s.azimuth_min_deg = s.azimuth_max_deg = 0;
    s.elevation_min_deg = s.elevation_max_deg = 0;
    s.radius = 4;
    s.count = 1;
    auto poses = sample_view_schedule(s, 0);
    REQUIRE(poses.size() == 1);
    CHECK(norm(poses[0].translation - Vec3{0, 0, -4}) < 1e-12);
    // Optical axis (+z column) points at the origin.
    Vec3 fwd = poses[0].rotation.col(2);
    CHECK(norm(fwd - Vec3{0, 0, 1}) < 1e-12);
  }

  SECTION("all elevations stay within the schedule") {
    ViewSchedule s;
    s.count = 200;
    s.radius = 4;
    auto poses = sample_view_schedule(s, 123);
    REQUIRE(poses.size() == 200);
    for (const auto& p : poses) {
      double el = std::asin(p.translation.y / norm(p.translation));
      CHECK(el >= -1e-12);
      CHECK(el <= deg2rad(20.0) + 1e-12);
    }
  }

  SECTION("poses look at the origin and are orthonormal") {
    ViewSchedule s;
    s.count = 64;
    auto poses = sample_view_schedule(s, 77);
    for (const auto& p : poses) {
      CHECK(max_abs_off_orthonormal(p.rotation) < 1e-9);
      CHECK(std::abs(p.rotation.det() - 1.0) < 1e-9);
      // The origin projects onto the optical axis.
      Vec3 to_origin = normalized(Vec3{0, 0, 0} - p.translation);
      CHECK(norm(to_origin - p.rotation.col(2)) < 1e-9);
    }
  }

  SECTION("same seed reproduces the list exactly") {
    ViewSchedule s;
    s.count = 16;
    auto a = sample_view_schedule(s, 5);
    auto b = sample_view_schedule(s, 5);
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].translation.x == b[i].translation.x);
      CHECK(a[i].translation.y == b[i].translation.y);
      CHECK(a[i].translation.z == b[i].translation.z);
      for (int k = 0; k < 9; ++k) CHECK(a[i].rotation.m[k] == b[i].rotation.m[k]);
    }
  }

  SECTION("degenerate radius is rejected") {
    ViewSchedule s;
    s.radius = 0;
    CHECK_THROWS_AS(sample_view_schedule(s, 0), std::invalid_argument);
  }
}
