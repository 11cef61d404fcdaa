// Copyright 2026 The trilift Authors
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>

#include "trilift/compose.hpp"
#include "trilift/io.hpp"
#include "trilift/oracle.hpp"

using namespace trilift;
namespace fs = std::filesystem;

namespace {

const char* kCli = TRILIFT_CLI_PATH;

int run_cli(const std::string& args) {
  std::string cmd = std::string(kCli) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("trilift_cli_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::map<std::string, std::vector<char>> tree_bytes(const fs::path& root) {
  std::map<std::string, std::vector<char>> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), root).string()] =
        std::vector<char>(std::istreambuf_iterator<char>(in), {});
  }
  return out;
}

// Small model + schedule so the whole pipeline runs in seconds.
std::string write_tiny_config(const fs::path& dir) {
  fs::path p = dir / "tiny.cfg";
  std::ofstream(p) << "[model]\nlatent_dim=8\nstyle_dim=8\nstyle_layers=4\nmapping_layers=2\n"
                   << "mapping_hidden=8\nplane_resolution=16\nplane_channels=4\n"
                   << "base_resolution=4\nbase_channels=6\nstage_channels=6 5\n"
                   << "decoder_hidden=8\n"
                   << "[lift]\nrays_per_step=96\npatch_size=6\nsamples_per_ray=8\n"
                   << "[eval]\nsize=24\nsamples_per_ray=8\npairs=4\n"
                   << "[interp]\nsize=24\nsamples_per_ray=8\n"
                   << "[compose]\nsamples_per_ray=8\n";
  return p.string();
}

struct Pipeline {
  fs::path base, data, lift_out;
  std::string cfg;

  explicit Pipeline(const std::string& tag) {
    base = fresh_dir(tag);
    cfg = write_tiny_config(base);
    data = base / "data";
    lift_out = base / "lift";
    REQUIRE(run_cli("--seed 5 --out " + data.string() +
                    " gen-views --objects 2 --views 3 --size 24") == 0);
    REQUIRE(run_cli("--config " + cfg + " --seed 5 --out " + lift_out.string() +
                    " lift --data " + data.string() + " --iters 6") == 0);
  }

  std::string checkpoint() const { return (lift_out / "checkpoint.tlc").string(); }
};

}  // namespace

TEST_CASE("cli gen-views") {
  SECTION("same seed twice gives byte-identical trees") {
    fs::path a = fresh_dir("gen_a") / "out";
    fs::path b = fresh_dir("gen_b") / "out";
    REQUIRE(run_cli("--seed 3 --out " + a.string() + " gen-views --objects 2 --views 3 --size 24") == 0);
    REQUIRE(run_cli("--seed 3 --out " + b.string() + " gen-views --objects 2 --views 3 --size 24") == 0);
    auto ta = tree_bytes(a);
    auto tb = tree_bytes(b);
    REQUIRE(ta.size() == tb.size());
    for (const auto& [rel, bytes] : ta) CHECK(tb.at(rel) == bytes);
  }

  SECTION("missing output directory is created and the manifest matches") {
    fs::path out = fresh_dir("gen_c") / "deep" / "nested" / "out";
    REQUIRE(run_cli("--seed 1 --out " + out.string() + " gen-views --objects 1 --views 4 --size 24") == 0);
    ordered_json manifest =
        ordered_json::parse(std::ifstream(out / "obj_000" / "manifest.json"));
    CHECK(manifest.at("view_count").get<int>() == 4);
    ordered_json summary = ordered_json::parse(std::ifstream(out / "summary.json"));
    CHECK(summary.at("command") == "gen-views");
    CHECK(summary.at("views_per_object").get<int>() == 4);
  }
}

TEST_CASE("cli lift") {
  SECTION("zero iterations returns the initialization") {
    fs::path base = fresh_dir("lift0");
    std::string cfg = write_tiny_config(base);
    fs::path data = base / "data";
    fs::path out = base / "lift";
    REQUIRE(run_cli("--seed 5 --out " + data.string() +
                    " gen-views --objects 1 --views 2 --size 24") == 0);
    REQUIRE(run_cli("--config " + cfg + " --seed 5 --out " + out.string() + " lift --data " +
                    data.string() + " --iters 0") == 0);
    Checkpoint ck = load_checkpoint((out / "checkpoint.tlc").string());
    // The stored parameters equal a fresh initialization with the same seed.
    GeneratorParams fresh = make_generator(ck.params.config, 5);
    std::vector<double> a, b;
    for_each_tensor(ck.params, [&](const std::string&, Tensor& t) {
      a.insert(a.end(), t.v.begin(), t.v.end());
    });
    for_each_tensor(fresh, [&](const std::string&, Tensor& t) {
      b.insert(b.end(), t.v.begin(), t.v.end());
    });
    CHECK(a == b);
    auto rows = read_loss_csv((out / "loss.csv").string());
    CHECK(rows.empty());
  }

  SECTION("loss csv has one row per iteration and resume continues the steps") {
    Pipeline p("lift_resume");
    auto rows = read_loss_csv((p.lift_out / "loss.csv").string());
    REQUIRE(rows.size() == 6);
    CHECK(rows.front().step == 1);
    CHECK(rows.back().step == 6);

    fs::path out2 = p.base / "lift2";
    REQUIRE(run_cli("--config " + p.cfg + " --seed 5 --out " + out2.string() + " lift --data " +
                    p.data.string() + " --iters 4 --resume " + p.checkpoint()) == 0);
    auto rows2 = read_loss_csv((out2 / "loss.csv").string());
    REQUIRE(rows2.size() == 4);
    CHECK(rows2.front().step == 7);
    CHECK(rows2.back().step == 10);
  }

  SECTION("same seed produces bit-identical outputs") {
    fs::path base = fresh_dir("lift_det");
    std::string cfg = write_tiny_config(base);
    fs::path data = base / "data";
    REQUIRE(run_cli("--seed 5 --out " + data.string() +
                    " gen-views --objects 2 --views 3 --size 24") == 0);
    fs::path o1 = base / "l1", o2 = base / "l2";
    for (const fs::path& o : {o1, o2})
      REQUIRE(run_cli("--config " + cfg + " --seed 9 --out " + o.string() + " lift --data " +
                      data.string() + " --iters 5") == 0);
    auto t1 = tree_bytes(o1);
    auto t2 = tree_bytes(o2);
    REQUIRE(t1.size() == t2.size());
    for (const auto& [rel, bytes] : t1) CHECK(t2.at(rel) == bytes);
  }

  SECTION("missing dataset directory is a user error") {
    fs::path base = fresh_dir("lift_bad");
    CHECK(run_cli("--out " + (base / "o").string() + " lift --data " +
                  (base / "nope").string()) == 1);
  }
}

TEST_CASE("cli compose and eval") {
  Pipeline p("pipe");

  // Backgrounds: two frames with calibration, one without.
  fs::path bg = p.base / "bg";
  fs::create_directories(bg);
  CameraIntrinsics cam(120, 120, 48, 36, 96, 72);
  for (int i = 0; i < 2; ++i) {
    Image frame(96, 72, 3);
    for (int y = 0; y < 72; ++y)
      for (int x = 0; x < 96; ++x)
        for (int c = 0; c < 3; ++c) frame.at(y, x, c) = 0.3 + 0.05 * c + 0.002 * y;
    char name[32];
    std::snprintf(name, sizeof name, "frame_%02d.png", i);
    write_png((bg / name).string(), frame);
    Calibration calib;
    calib.cam = cam;
    calib.cam_height_m = 1.65;
    std::snprintf(name, sizeof name, "frame_%02d.txt", i);
    write_calibration((bg / name).string(), calib);
  }
  write_png((bg / "orphan.png").string(), Image(8, 8, 3));  // no calibration

  SECTION("zero objects reproduces the background and labels are empty") {
    fs::path out = p.base / "compose0";
    REQUIRE(run_cli("--config " + p.cfg + " --seed 4 --out " + out.string() + " compose " +
                    "--checkpoint " + p.checkpoint() + " --backgrounds " + bg.string() +
                    " --objects-per-frame 0") == 0);
    std::ifstream a(bg / "frame_00.png", std::ios::binary);
    std::ifstream b(out / "frames" / "frame_00.png", std::ios::binary);
    std::vector<char> ba(std::istreambuf_iterator<char>(a), {});
    std::vector<char> bb(std::istreambuf_iterator<char>(b), {});
    CHECK(ba == bb);
    std::ifstream label(out / "labels" / "frame_00.txt");
    std::string content((std::istreambuf_iterator<char>(label)), {});
    CHECK(content.empty());
    ordered_json summary = ordered_json::parse(std::ifstream(out / "summary.json"));
    CHECK(summary.at("frames").get<int>() == 2);
    CHECK(summary.at("skipped").get<int>() == 1);
  }

  SECTION("every composed frame has a matching label file and runs deterministically") {
    fs::path o1 = p.base / "c1", o2 = p.base / "c2";
    for (const fs::path& o : {o1, o2})
      REQUIRE(run_cli("--config " + p.cfg + " --seed 4 --out " + o.string() + " compose " +
                      "--checkpoint " + p.checkpoint() + " --backgrounds " + bg.string() +
                      " --objects-per-frame 2") == 0);
    for (const auto& e : fs::directory_iterator(o1 / "frames")) {
      fs::path label = o1 / "labels" / e.path().stem();
      label += ".txt";
      CHECK(fs::exists(label));
    }
    auto t1 = tree_bytes(o1);
    auto t2 = tree_bytes(o2);
    REQUIRE(t1.size() == t2.size());
    for (const auto& [rel, bytes] : t1) CHECK(t2.at(rel) == bytes);
  }

  SECTION("eval writes the report and is deterministic") {
    fs::path o1 = p.base / "e1", o2 = p.base / "e2";
    for (const fs::path& o : {o1, o2})
      REQUIRE(run_cli("--config " + p.cfg + " --seed 8 --out " + o.string() + " eval " +
                      "--checkpoint " + p.checkpoint() + " --pairs 4") == 0);
    CHECK(fs::exists(o1 / "reprojection.csv"));
    ordered_json summary = ordered_json::parse(std::ifstream(o1 / "summary.json"));
    CHECK(summary.at("pairs").get<int>() == 4);
    CHECK(summary.at("mean_reprojection_error").get<double>() >= 0.0);
    auto t1 = tree_bytes(o1);
    auto t2 = tree_bytes(o2);
    for (const auto& [rel, bytes] : t1) CHECK(t2.at(rel) == bytes);
  }

  SECTION("missing checkpoint is a user error") {
    CHECK(run_cli("--out " + (p.base / "x").string() + " eval --checkpoint " +
                  (p.base / "nope.tlc").string()) == 1);
  }
}

TEST_CASE("cli interp") {
  Pipeline p("interp");

  SECTION("identical endpoints give identical frames") {
    fs::path out = p.base / "interp_same";
    REQUIRE(run_cli("--config " + p.cfg + " --seed 2 --out " + out.string() + " interp " +
                    "--checkpoint " + p.checkpoint() + " --obj-a 0 --obj-b 0 --frames 4") == 0);
    Image strip = read_png((out / "interp.png").string(), 3);
    REQUIRE(strip.width == 4 * 24);
    for (int k = 1; k < 4; ++k)
      for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x)
          for (int c = 0; c < 3; ++c)
            CHECK(strip.at(y, k * 24 + x, c) == strip.at(y, x, c));
  }

  SECTION("endpoints match direct renders exactly") {
    fs::path out = p.base / "interp_ab";
    REQUIRE(run_cli("--config " + p.cfg + " --seed 2 --out " + out.string() + " interp " +
                    "--checkpoint " + p.checkpoint() + " --obj-a 0 --obj-b 1 --frames 3 " +
                    "--azimuth 30 --elevation 10") == 0);
    Image strip = read_png((out / "interp.png").string(), 3);
    Checkpoint ck = load_checkpoint(p.checkpoint());
    CameraIntrinsics cam(1.1 * 24, 1.1 * 24, 12, 12, 24, 24);
    RaySampleSpec spec;
    spec.samples_per_ray = 8;
    RigidPose pose = pose_from_azel(deg2rad(30), deg2rad(10), 4.0);
    for (int endpoint : {0, 1}) {
      StyleVector w = map_latent(ck.params, ck.latents[endpoint]);
      TriPlaneField f = synthesize_planes(ck.params, w);
      FieldView fv = make_field_view(ck.params, f, w);
      RenderOutput r = render_image(fv, cam, pose, unit_cube_box(), spec);
      int x0 = endpoint == 0 ? 0 : 2 * 24;
      for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x)
          for (int c = 0; c < 3; ++c)
            CHECK(to_u8(strip.at(y, x0 + x, c)) == to_u8(r.rgb.at(y, x, c)));
    }
  }
}
