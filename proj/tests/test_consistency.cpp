// Copyright 2026 The trilift Authors
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "trilift/consistency.hpp"
#include "trilift/oracle.hpp"

using namespace trilift;

namespace {

CameraIntrinsics square_cam(int size) {
  return CameraIntrinsics(1.1 * size, 1.1 * size, size / 2.0, size / 2.0, size, size);
}

ViewRenderer oracle_renderer(const PrimitiveScene& scene, const CameraIntrinsics& cam) {
  return [&scene, cam](const RigidPose& pose) {
    OracleView v = render_oracle(scene, cam, pose);
    return RenderedView{v.posed.rgb, v.depth};
  };
}

}  // namespace

TEST_CASE("warp_view") {
  CameraIntrinsics cam = square_cam(64);

  SECTION("identity warp reproduces the image on valid pixels with zero error") {
    PrimitiveScene scene = gen_scene(1);
    RigidPose pose = pose_from_azel(0.4, 0.2, 4.0);
    OracleView v = render_oracle(scene, cam, pose);
    WarpResult w = warp_view(v.posed.rgb, v.depth, pose, pose, cam);
    auto re = reprojection_error(v.posed.rgb, w.rgb, w.validity);
    REQUIRE(re.has_value());
    CHECK(*re == 0.0);
    int valid = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if (w.validity.at(y, x, 0) > 0.5) {
          ++valid;
          for (int c = 0; c < 3; ++c) CHECK(w.rgb.at(y, x, c) == v.posed.rgb.at(y, x, c));
        }
    CHECK(valid > 50);
  }

  SECTION("fronto-parallel plane under horizontal translation shifts by f dx / depth") {
    double depth_z = 8.0;
    double dx = depth_z / cam.fx * 4.0;  // integer 4-pixel shift
    Image rgb(64, 64, 3), depth(64, 64, 1);
    Rng rng(2);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = rng.uniform();
        Ray r = pixel_ray(cam, RigidPose{}, {x + 0.5, y + 0.5});
        depth.at(y, x, 0) = depth_z / r.direction.z;  // ray distance to plane z = depth_z
      }
    RigidPose pose_a;
    RigidPose pose_b;
    pose_b.translation = {dx, 0, 0};
    WarpResult w = warp_view(rgb, depth, pose_a, pose_b, cam);
    int shift = 4;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        int xs = x - shift;
        if (xs < 0 || xs >= 64) continue;
        REQUIRE(w.validity.at(y, xs, 0) > 0.5);
        for (int c = 0; c < 3; ++c)
          CHECK(w.rgb.at(y, xs, c) == Catch::Approx(rgb.at(y, x, c)).margin(1e-12));
      }
  }

  SECTION("empty validity reports a missing error") {
    Image rgb(8, 8, 3), depth(8, 8, 1);  // all depths zero: nothing to warp
    WarpResult w = warp_view(rgb, depth, RigidPose{}, RigidPose{}, square_cam(8));
    CHECK_FALSE(reprojection_error(rgb, w.rgb, w.validity).has_value());
  }
}

TEST_CASE("reprojection_error basics") {
  Image a(4, 4, 3), b(4, 4, 3);
  Image valid(4, 4, 1);
  std::fill(valid.v.begin(), valid.v.end(), 1.0);
  SECTION("identical images give zero") {
    CHECK(*reprojection_error(a, b, valid) == 0.0);
  }
  SECTION("unit difference gives one") {
    std::fill(a.v.begin(), a.v.end(), 1.0);
    CHECK(*reprojection_error(a, b, valid) == 1.0);
  }
}

TEST_CASE("oracle multi-view consistency") {
  CameraIntrinsics cam = square_cam(64);
  PrimitiveScene scene = gen_scene(7);
  ViewRenderer render = oracle_renderer(scene, cam);

  SECTION("exact analytic depth keeps the reprojection error small at 5 degrees") {
    ViewPairSpec spec;
    spec.count = 12;
    spec.offset_deg = 5.0;
    spec.seed = 3;
    MetricReport report = evaluate_consistency(render, cam, spec);
    CHECK(report.evaluated == 12);
    CHECK(report.mean_re < 0.03);  // resampling-limited threshold from the pilot run
    for (const auto& p : report.pairs) CHECK(p.valid_fraction > 0.0);
  }

  SECTION("error is symmetric in expectation under pair swap") {
    ViewPairSpec spec;
    spec.count = 40;
    spec.offset_deg = 5.0;
    spec.seed = 4;
    Rng rng(5);
    double acc_fwd = 0, acc_bwd = 0;
    int n = 0;
    for (int k = 0; k < spec.count; ++k) {
      double az = rng.uniform(0.0, 360.0);
      double el = rng.uniform(0.0, 20.0);
      RigidPose a = pose_from_azel(deg2rad(az), deg2rad(el), spec.radius);
      RigidPose b = pose_from_azel(deg2rad(az + spec.offset_deg), deg2rad(el), spec.radius);
      RenderedView va = render(a), vb = render(b);
      WarpResult wab = warp_view(va.rgb, va.depth, a, b, cam);
      WarpResult wba = warp_view(vb.rgb, vb.depth, b, a, cam);
      auto re_ab = reprojection_error(vb.rgb, wab.rgb, wab.validity);
      auto re_ba = reprojection_error(va.rgb, wba.rgb, wba.validity);
      if (re_ab && re_ba) {
        acc_fwd += *re_ab;
        acc_bwd += *re_ba;
        ++n;
      }
    }
    REQUIRE(n > 30);
    CHECK(std::abs(acc_fwd / n - acc_bwd / n) < 0.01);
  }

  SECTION("the inconsistency-injected baseline scores far worse") {
    ViewPairSpec spec;
    spec.count = 20;
    spec.offset_deg = 5.0;
    spec.seed = 6;
    MetricReport clean = evaluate_consistency(render, cam, spec);
    MetricReport poisoned = evaluate_consistency(make_inconsistent_baseline(render), cam, spec);
    CHECK(poisoned.mean_re > 2.0 * clean.mean_re);
  }

  SECTION("reports serialize with per-pair rows") {
    ViewPairSpec spec;
    spec.count = 3;
    spec.seed = 7;
    MetricReport report = evaluate_consistency(render, cam, spec);
    std::string csv = report_to_csv(report);
    CHECK(csv.find("pair_id,azimuth_a,azimuth_b,re,valid_fraction") == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  }
}
