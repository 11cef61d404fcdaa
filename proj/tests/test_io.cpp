// Copyright 2026 The trilift Authors
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "trilift/io.hpp"

using namespace trilift;
namespace fs = std::filesystem;

namespace {
std::string temp_path(const std::string& name) {
  fs::path p = fs::temp_directory_path() / "trilift_io";
  fs::create_directories(p);
  return (p / name).string();
}

GeneratorConfig tiny_config() {
  GeneratorConfig cfg;
  cfg.latent_dim = 8;
  cfg.style_dim = 8;
  cfg.style_layers = 4;
  cfg.mapping_layers = 2;
  cfg.mapping_hidden = 8;
  cfg.plane_resolution = 16;
  cfg.plane_channels = 4;
  cfg.base_resolution = 4;
  cfg.base_channels = 6;
  cfg.stage_channels = {6, 5};
  cfg.decoder_hidden = 8;
  return cfg;
}
}  // namespace

TEST_CASE("checkpoint round trip") {
  GeneratorParams params = make_generator(tiny_config(), 3);
  std::vector<ObjectRecord> records(2);
  records[0].id = "obj_000";
  records[1].id = "obj_001";
  for (int i = 0; i < 2; ++i) {
    records[i].latent = Tensor({tiny_config().latent_dim});
    Rng r(100 + i);
    records[i].latent.fill_normal(r, 0.0, 1.0);
  }

  SECTION("parameters and latents survive byte-exact") {
    std::string path = temp_path("ck_basic.tlc");
    save_checkpoint(path, params, records);
    Checkpoint ck = load_checkpoint(path);
    REQUIRE(ck.object_ids.size() == 2);
    CHECK(ck.object_ids[0] == "obj_000");
    CHECK(ck.latents[0].v == records[0].latent.v);
    CHECK_FALSE(ck.optim.has_value());
    std::vector<double> a, b;
    for_each_tensor(params, [&](const std::string&, Tensor& t) {
      a.insert(a.end(), t.v.begin(), t.v.end());
    });
    for_each_tensor(ck.params, [&](const std::string&, Tensor& t) {
      b.insert(b.end(), t.v.begin(), t.v.end());
    });
    CHECK(a == b);
    CHECK(ck.params.config.plane_resolution == 16);
  }

  SECTION("optimizer state rides along for resume") {
    OptimState st;
    for_each_tensor(params, [&](const std::string&, Tensor& t) { st.register_tensor(t); });
    for (const auto& r : records) st.register_tensor(r.latent);
    st.step = 17;
    Rng mr(5);
    for (auto& slot : st.slots) {
      slot.m.fill_normal(mr, 0, 0.1);
      slot.v.fill_uniform(mr, 0, 0.01);
    }
    std::string path = temp_path("ck_optim.tlc");
    save_checkpoint(path, params, records, &st);
    Checkpoint ck = load_checkpoint(path);
    REQUIRE(ck.optim.has_value());
    CHECK(ck.optim->step == 17);
    REQUIRE(ck.optim->slots.size() == st.slots.size());
    for (size_t i = 0; i < st.slots.size(); ++i) {
      CHECK(ck.optim->slots[i].m.v == st.slots[i].m.v);
      CHECK(ck.optim->slots[i].v.v == st.slots[i].v.v);
    }
  }

  SECTION("corrupted magic is rejected") {
    std::string path = temp_path("ck_bad.tlc");
    std::ofstream(path) << "not a checkpoint";
    CHECK_THROWS(load_checkpoint(path));
  }
}

TEST_CASE("calibration parser") {
  SECTION("well-formed file parses") {
    std::string path = temp_path("calib.txt");
    std::ofstream(path) << "# camera\nfx=721.5\nfy = 721.5\ncx=609.6\ncy=172.8\n"
                        << "width=1242\nheight=375\ncam_height_m=1.65\n"
                        << "extrinsic=1 0 0 0 0 1 0 0 0 0 1 0\n";
    Calibration c = parse_calibration(path);
    CHECK(c.cam.fx == 721.5);
    CHECK(c.cam.width == 1242);
    CHECK(c.cam_height_m == 1.65);
    CHECK(c.pose.rotation(0, 0) == 1.0);
  }

  SECTION("missing keys are config errors") {
    std::string path = temp_path("calib_bad.txt");
    std::ofstream(path) << "fx=721.5\nfy=721.5\n";
    CHECK_THROWS_AS(parse_calibration(path), ConfigError);
  }

  SECTION("write/parse round trip") {
    Calibration c;
    c.cam = CameraIntrinsics(70.25, 71.5, 32.125, 31.875, 64, 64);
    c.pose = pose_from_azel(0.7, 0.2, 4.0);
    c.cam_height_m = 1.23;
    std::string path = temp_path("calib_rt.txt");
    write_calibration(path, c);
    Calibration back = parse_calibration(path);
    CHECK(back.cam.fx == c.cam.fx);
    CHECK(back.cam_height_m == c.cam_height_m);
    for (int i = 0; i < 9; ++i) CHECK(back.pose.rotation.m[i] == c.pose.rotation.m[i]);
    CHECK(back.pose.translation.x == c.pose.translation.x);
  }
}

TEST_CASE("run config parser") {
  SECTION("sections, comments and overrides") {
    std::string path = temp_path("run.cfg");
    std::ofstream(path) << "# global\nseed=7\n[lift]\niterations=500  # inline\nlr_params=0.003\n"
                        << "[compose]\nobjects_per_frame=4\n";
    RunConfig cfg = RunConfig::from_file(path);
    CHECK(cfg.get_int("seed", 0) == 7);
    CHECK(cfg.get_int("lift.iterations", 0) == 500);
    CHECK(cfg.get_double("lift.lr_params", 0) == 0.003);
    CHECK(cfg.get_int("compose.objects_per_frame", 0) == 4);
    CHECK(cfg.get_int("lift.missing", 42) == 42);
    cfg.set("lift.iterations", "9");
    CHECK(cfg.get_int("lift.iterations", 0) == 9);
  }

  SECTION("malformed lines and non-numeric values raise config errors") {
    std::string path = temp_path("run_bad.cfg");
    std::ofstream(path) << "[lift]\nnot a kv line\n";
    CHECK_THROWS_AS(RunConfig::from_file(path), ConfigError);
    std::string path2 = temp_path("run_bad2.cfg");
    std::ofstream(path2) << "[lift]\niterations=abc\n";
    RunConfig cfg = RunConfig::from_file(path2);
    CHECK_THROWS_AS(cfg.get_int("lift.iterations", 0), ConfigError);
  }
}

TEST_CASE("loss csv") {
  std::vector<LossRow> rows(3);
  for (int i = 0; i < 3; ++i) {
    rows[i].step = i + 1;
    rows[i].rgb = 0.1 * (i + 1);
    rows[i].iou = 0.2;
    rows[i].perc = 0.05;
    rows[i].total = rows[i].rgb + rows[i].iou + rows[i].perc;
  }
  std::string path = temp_path("loss.csv");
  write_loss_csv(path, rows);
  auto back = read_loss_csv(path);
  REQUIRE(back.size() == 3);
  CHECK(back[0].step == 1);
  CHECK(back[2].total == Catch::Approx(rows[2].total));
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "step,l_rgb,l_iou,l_perc,total");
}

TEST_CASE("png io") {
  SECTION("rgb round trip at 8-bit precision") {
    Image img(9, 7, 3);
    Rng rng(1);
    for (auto& v : img.v) v = rng.uniform();
    std::string path = temp_path("rt.png");
    write_png(path, img);
    Image back = read_png(path, 3);
    REQUIRE(back.width == 9);
    REQUIRE(back.height == 7);
    for (size_t i = 0; i < img.numel(); ++i)
      CHECK(back.v[i] == Catch::Approx(img.v[i]).margin(0.5 / 255.0 + 1e-9));
  }

  SECTION("binary masks survive exactly") {
    Image m(8, 8, 1);
    Rng rng(2);
    for (auto& v : m.v) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    std::string path = temp_path("mask.png");
    write_png(path, m);
    Image back = read_png(path, 1);
    CHECK(back.v == m.v);
  }

  SECTION("same pixels produce identical bytes") {
    Image img(16, 16, 3);
    Rng rng(3);
    for (auto& v : img.v) v = rng.uniform();
    std::string p1 = temp_path("det1.png");
    std::string p2 = temp_path("det2.png");
    write_png(p1, img);
    write_png(p2, img);
    std::ifstream a(p1, std::ios::binary), b(p2, std::ios::binary);
    std::vector<char> ba(std::istreambuf_iterator<char>(a), {});
    std::vector<char> bb(std::istreambuf_iterator<char>(b), {});
    CHECK(ba == bb);
  }
}

TEST_CASE("f32 grid io") {
  Image d(5, 4, 1);
  Rng rng(4);
  for (auto& v : d.v) v = rng.uniform(0.0, 40.0);
  std::string path = temp_path("depth.f32");
  write_f32_grid(path, d);
  Image back = read_f32_grid(path);
  REQUIRE(back.width == 5);
  REQUIRE(back.height == 4);
  for (size_t i = 0; i < d.numel(); ++i)
    CHECK(back.v[i] == Catch::Approx(d.v[i]).margin(1e-5));
  CHECK(fs::file_size(path) == 16 + 5 * 4 * 4);

  std::string bad = temp_path("bad.f32");
  std::ofstream(bad) << "XX";
  CHECK_THROWS(read_f32_grid(bad));
}
