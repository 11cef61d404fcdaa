// Copyright 2026 The trilift Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: generate multi-view data, lift it into the shared
// generator, compose augmented frames, evaluate consistency, and render latent
// interpolations. All randomness flows from --seed through named sub-streams;
// every subcommand writes a machine-readable summary.json on success.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trilift/compose.hpp"
#include "trilift/consistency.hpp"
#include "trilift/fit.hpp"
#include "trilift/generator.hpp"
#include "trilift/io.hpp"
#include "trilift/oracle.hpp"
#include "trilift/parallel.hpp"
#include "trilift/render.hpp"

namespace fs = std::filesystem;
using namespace trilift;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::string out_dir = "out";
  uint64_t seed = 0;
  int workers = 0;
  bool quiet = false;
};

RunConfig load_config(const GlobalOpts& g) {
  RunConfig cfg;
  if (!g.config_path.empty()) cfg = RunConfig::from_file(g.config_path);
  return cfg;
}

GeneratorConfig generator_config_from(const RunConfig& cfg) {
  GeneratorConfig g;
  g.latent_dim = cfg.get_int("model.latent_dim", g.latent_dim);
  g.style_dim = cfg.get_int("model.style_dim", g.style_dim);
  g.style_layers = cfg.get_int("model.style_layers", g.style_layers);
  g.mapping_layers = cfg.get_int("model.mapping_layers", g.mapping_layers);
  g.mapping_hidden = cfg.get_int("model.mapping_hidden", g.mapping_hidden);
  g.plane_resolution = cfg.get_int("model.plane_resolution", g.plane_resolution);
  g.plane_channels = cfg.get_int("model.plane_channels", g.plane_channels);
  g.base_resolution = cfg.get_int("model.base_resolution", g.base_resolution);
  g.base_channels = cfg.get_int("model.base_channels", g.base_channels);
  g.decoder_hidden = cfg.get_int("model.decoder_hidden", g.decoder_hidden);
  g.omega0 = cfg.get_double("model.omega0", g.omega0);
  g.sigma_bias_init = cfg.get_double("model.sigma_bias_init", g.sigma_bias_init);
  if (cfg.has("model.stage_channels")) {
    g.stage_channels.clear();
    std::istringstream s(cfg.get_string("model.stage_channels", ""));
    int v;
    while (s >> v) g.stage_channels.push_back(v);
  }
  return g;
}

void write_summary(const GlobalOpts& g, ordered_json j) {
  fs::create_directories(g.out_dir);
  j["seed"] = g.seed;
  write_text_file((fs::path(g.out_dir) / "summary.json").string(), j.dump(2) + "\n");
}

CameraIntrinsics square_camera(int size) {
  return CameraIntrinsics(1.1 * size, 1.1 * size, size / 2.0, size / 2.0, size, size);
}

std::vector<LoadedObject> load_dataset(const std::string& dir, bool with_depth = false) {
  std::vector<std::string> obj_dirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / "manifest.json"))
      obj_dirs.push_back(e.path().string());
  std::sort(obj_dirs.begin(), obj_dirs.end());
  if (obj_dirs.empty()) throw ConfigError("no object directories under " + dir);
  std::vector<LoadedObject> out;
  for (const auto& d : obj_dirs) out.push_back(load_object_dir(d, with_depth));
  return out;
}

// ---------------------------------------------------------------------------

int cmd_gen_views(const GlobalOpts& g, int objects, int views, int size, double radius,
                  double noise_az, double noise_el) {
  RunConfig cfg = load_config(g);
  DatasetOptions opt;
  opt.num_objects = objects > 0 ? objects : cfg.get_int("gen.objects", 2);
  opt.schedule.count = views > 0 ? views : cfg.get_int("gen.views", 20);
  int sz = size > 0 ? size : cfg.get_int("gen.size", 64);
  opt.cam = square_camera(sz);
  opt.schedule.radius = radius > 0 ? radius : cfg.get_double("gen.radius", 4.0);
  opt.schedule.elevation_min_deg = cfg.get_double("gen.elevation_min_deg", 0.0);
  opt.schedule.elevation_max_deg = cfg.get_double("gen.elevation_max_deg", 20.0);
  opt.seed = g.seed;
  opt.pose_noise_azimuth_deg = noise_az >= 0 ? noise_az : cfg.get_double("gen.noise_az", 0.0);
  opt.pose_noise_elevation_deg = noise_el >= 0 ? noise_el : cfg.get_double("gen.noise_el", 0.0);

  auto dirs = gen_dataset(g.out_dir, opt);
  ordered_json j;
  j["command"] = "gen-views";
  j["objects"] = opt.num_objects;
  j["views_per_object"] = opt.schedule.count;
  j["image_size"] = sz;
  std::vector<std::string> rel_dirs;
  for (const auto& d : dirs) rel_dirs.push_back(fs::path(d).filename().string());
  j["object_dirs"] = rel_dirs;
  write_summary(g, j);
  if (!g.quiet)
    std::printf("generated %d objects x %d views under %s\n", opt.num_objects,
                opt.schedule.count, g.out_dir.c_str());
  return 0;
}

int cmd_lift(const GlobalOpts& g, const std::string& data_dir, int iters,
             const std::string& resume) {
  RunConfig cfg = load_config(g);
  FitConfig fit_cfg;
  fit_cfg.iterations = iters >= 0 ? iters : cfg.get_int("lift.iterations", 2000);
  fit_cfg.rays_per_step = cfg.get_int("lift.rays_per_step", 512);
  fit_cfg.patch_size = cfg.get_int("lift.patch_size", 16);
  fit_cfg.samples_per_ray = cfg.get_int("lift.samples_per_ray", 32);
  fit_cfg.lr_params = cfg.get_double("lift.lr_params", 1e-3);
  fit_cfg.lr_latents = cfg.get_double("lift.lr_latents", 1e-2);
  fit_cfg.weights.lambda_iou = cfg.get_double("lift.lambda_iou", 1.0);
  fit_cfg.weights.lambda_perc = cfg.get_double("lift.lambda_perc", 0.1);
  fit_cfg.min_mask_fraction = cfg.get_double("lift.min_mask_fraction", 0.01);
  fit_cfg.seed = g.seed;
  fit_cfg.quiet = g.quiet;

  auto loaded = load_dataset(data_dir);
  std::vector<ObjectRecord> records;
  for (auto& lo : loaded) records.push_back(std::move(lo.record));

  GeneratorParams params;
  OptimState state;
  if (!resume.empty()) {
    Checkpoint ck = load_checkpoint(resume);
    params = std::move(ck.params);
    if (ck.object_ids.size() != records.size())
      throw ConfigError("checkpoint object count does not match dataset");
    for (size_t i = 0; i < records.size(); ++i) {
      if (ck.object_ids[i] != records[i].id)
        throw ConfigError("checkpoint object ids do not match dataset");
      records[i].latent = ck.latents[i];
    }
    if (ck.optim) state = std::move(*ck.optim);
  } else {
    params = make_generator(generator_config_from(cfg), g.seed);
    for (size_t i = 0; i < records.size(); ++i) {
      records[i].latent = Tensor({params.config.latent_dim});
      Rng r = Rng(g.seed).stream("latent-init").stream(i);
      records[i].latent.fill_normal(r, 0.0, 1.0);
    }
  }

  FitResult result = fit(records, params, fit_cfg, &state);

  fs::create_directories(g.out_dir);
  std::string ckpt = (fs::path(g.out_dir) / "checkpoint.tlc").string();
  save_checkpoint(ckpt, params, records, &state);
  write_loss_csv((fs::path(g.out_dir) / "loss.csv").string(), result.history);

  ordered_json j;
  j["command"] = "lift";
  j["iterations"] = fit_cfg.iterations;
  j["objects"] = records.size();
  j["dropped_views"] = result.dropped_views;
  j["checkpoint"] = fs::path(ckpt).filename().string();
  j["final_step"] = state.step;
  if (!result.history.empty()) {
    j["final_loss"] = result.history.back().total;
    j["final_l_rgb"] = result.history.back().rgb;
    j["final_l_iou"] = result.history.back().iou;
  }
  write_summary(g, j);
  if (!g.quiet)
    std::printf("lifted %zu objects for %d iterations -> %s\n", records.size(),
                fit_cfg.iterations, ckpt.c_str());
  return 0;
}

int cmd_compose(const GlobalOpts& g, const std::string& ckpt_path, const std::string& bg_dir,
                int objects_per_frame) {
  RunConfig cfg = load_config(g);
  Checkpoint ck = load_checkpoint(ckpt_path);
  ComposeConfig ccfg;
  ccfg.num_objects =
      objects_per_frame >= 0 ? objects_per_frame : cfg.get_int("compose.objects_per_frame", 3);
  ccfg.retry_budget = cfg.get_int("compose.retry_budget", 100);
  ccfg.max_overlap = cfg.get_double("compose.max_overlap", 0.3);
  ccfg.feather_sigma_px = cfg.get_double("compose.feather_sigma_px", 1.0);
  ccfg.shadow_strength = cfg.get_double("compose.shadow_strength", 0.4);
  ccfg.sample_spec.samples_per_ray = cfg.get_int("compose.samples_per_ray", 64);
  ccfg.use_mask_extent_bbox = cfg.get_bool("compose.mask_extent_bbox", false);

  std::vector<fs::path> frames;
  for (const auto& e : fs::directory_iterator(bg_dir))
    if (e.path().extension() == ".png" &&
        e.path().stem().string().find("_drivable") == std::string::npos)
      frames.push_back(e.path());
  std::sort(frames.begin(), frames.end());
  if (frames.empty()) throw ConfigError("no PNG frames under " + bg_dir);

  fs::create_directories(fs::path(g.out_dir) / "frames");
  fs::create_directories(fs::path(g.out_dir) / "labels");

  int composed = 0, skipped = 0, placed_total = 0, rejected_total = 0;
  for (const auto& frame_path : frames) {
    fs::path calib_path = frame_path;
    calib_path.replace_extension(".txt");
    if (!fs::exists(calib_path)) {
      ++skipped;
      if (!g.quiet)
        std::fprintf(stderr, "warning: no calibration for %s, skipping\n",
                     frame_path.string().c_str());
      continue;
    }
    Calibration calib = parse_calibration(calib_path.string());
    Image background = read_png(frame_path.string(), 3);
    if (background.width != calib.cam.width || background.height != calib.cam.height)
      throw ConfigError("calibration size mismatch for " + frame_path.string());

    SampleDistributions dist;
    dist.x_min = cfg.get_double("compose.x_min", dist.x_min);
    dist.x_max = cfg.get_double("compose.x_max", dist.x_max);
    dist.y_mu = cfg.get_double("compose.y_mu", calib.cam_height_m);
    dist.y_sigma = cfg.get_double("compose.y_sigma", dist.y_sigma);
    dist.z_min = cfg.get_double("compose.z_min", dist.z_min);
    dist.z_max = cfg.get_double("compose.z_max", dist.z_max);
    dist.l_mu = cfg.get_double("compose.l_mu", dist.l_mu);
    dist.w_mu = cfg.get_double("compose.w_mu", dist.w_mu);
    dist.h_mu = cfg.get_double("compose.h_mu", dist.h_mu);
    dist.lwh_sigma = cfg.get_double("compose.lwh_sigma", dist.lwh_sigma);

    // Drivable map: from <stem>_drivable.png when present, else all-drivable.
    double mpc = cfg.get_double("compose.bev_m_per_cell", 0.5);
    DrivableMap grid = DrivableMap::all_drivable(
        static_cast<int>((dist.x_max - dist.x_min) / mpc) + 1,
        static_cast<int>(dist.z_max / mpc) + 1, mpc, dist.x_min, 0.0);
    fs::path drivable_path = frame_path.parent_path() /
                             (frame_path.stem().string() + "_drivable.png");
    RigidPose cam_pose;  // identity: compose in the camera frame
    if (fs::exists(drivable_path)) {
      Image seg = read_png(drivable_path.string(), 1);
      grid = ipm_drivable_map(seg, calib.cam, cam_pose, calib.cam_height_m, grid);
    }

    Rng rng = Rng(g.seed).stream("compose").stream(frame_path.stem().string());
    CompositeScene scene = compose_frame(background, calib.cam, cam_pose, ck.params, ck.latents,
                                         grid, dist, ccfg, rng);
    write_png((fs::path(g.out_dir) / "frames" / frame_path.filename()).string(), scene.frame);
    write_text_file(
        (fs::path(g.out_dir) / "labels" / (frame_path.stem().string() + ".txt")).string(),
        labels_to_text(scene));
    ++composed;
    placed_total += static_cast<int>(scene.objects.size());
    rejected_total += scene.rejected;
  }

  ordered_json j;
  j["command"] = "compose";
  j["frames"] = composed;
  j["skipped"] = skipped;
  j["placed"] = placed_total;
  j["rejected"] = rejected_total;
  write_summary(g, j);
  if (!g.quiet)
    std::printf("composed %d frames (%d objects placed, %d draws rejected, %d skipped)\n",
                composed, placed_total, rejected_total, skipped);
  return 0;
}

int cmd_eval(const GlobalOpts& g, const std::string& ckpt_path, int pairs, double offset,
             int object_index, bool with_baseline) {
  RunConfig cfg = load_config(g);
  Checkpoint ck = load_checkpoint(ckpt_path);
  if (object_index < 0 || object_index >= static_cast<int>(ck.latents.size()))
    throw ConfigError("object index out of range");
  int size = cfg.get_int("eval.size", 64);
  CameraIntrinsics cam = square_camera(size);

  ViewPairSpec spec;
  spec.count = pairs > 0 ? pairs : cfg.get_int("eval.pairs", 100);
  spec.offset_deg = offset > 0 ? offset : cfg.get_double("eval.offset_deg", 5.0);
  spec.radius = cfg.get_double("eval.radius", 4.0);
  spec.seed = g.seed;

  StyleVector w = map_latent(ck.params, ck.latents[object_index]);
  TriPlaneField field = synthesize_planes(ck.params, w);
  FieldView view = make_field_view(ck.params, field, w);
  RaySampleSpec rspec;
  rspec.samples_per_ray = cfg.get_int("eval.samples_per_ray", 64);
  BoxPose box = unit_cube_box();
  ViewRenderer render = [&](const RigidPose& pose) {
    RenderOutput out = render_image(view, cam, pose, box, rspec);
    return RenderedView{out.rgb, out.depth};
  };

  MetricReport report = evaluate_consistency(render, cam, spec);
  fs::create_directories(g.out_dir);
  write_text_file((fs::path(g.out_dir) / "reprojection.csv").string(), report_to_csv(report));

  ordered_json j;
  j["command"] = "eval";
  j["pairs"] = spec.count;
  j["offset_deg"] = spec.offset_deg;
  j["object"] = ck.object_ids[object_index];
  j["mean_reprojection_error"] = report.mean_re;
  j["evaluated_pairs"] = report.evaluated;
  if (with_baseline) {
    MetricReport base = evaluate_consistency(make_inconsistent_baseline(render), cam, spec);
    j["baseline_mean_reprojection_error"] = base.mean_re;
  }
  write_summary(g, j);
  if (!g.quiet)
    std::printf("mean reprojection error over %d pairs: %.6f\n", report.evaluated,
                report.mean_re);
  return 0;
}

int cmd_interp(const GlobalOpts& g, const std::string& ckpt_path, int obj_a, int obj_b,
               int frames, double azimuth_deg, double elevation_deg) {
  RunConfig cfg = load_config(g);
  Checkpoint ck = load_checkpoint(ckpt_path);
  int n = static_cast<int>(ck.latents.size());
  if (obj_a < 0 || obj_a >= n || obj_b < 0 || obj_b >= n)
    throw ConfigError("object index out of range");
  if (frames < 1) throw ConfigError("frames must be >= 1");
  int size = cfg.get_int("interp.size", 64);
  CameraIntrinsics cam = square_camera(size);
  RigidPose pose = pose_from_azel(deg2rad(azimuth_deg), deg2rad(elevation_deg),
                                  cfg.get_double("interp.radius", 4.0));
  RaySampleSpec rspec;
  rspec.samples_per_ray = cfg.get_int("interp.samples_per_ray", 64);
  BoxPose box = unit_cube_box();

  Image strip(size * frames, size, 3);
  for (int k = 0; k < frames; ++k) {
    double alpha = frames == 1 ? 0.0 : static_cast<double>(k) / (frames - 1);
    Tensor z({ck.params.config.latent_dim});
    for (size_t i = 0; i < z.numel(); ++i)
      z[i] = (1.0 - alpha) * ck.latents[obj_a][i] + alpha * ck.latents[obj_b][i];
    StyleVector w = map_latent(ck.params, z);
    TriPlaneField field = synthesize_planes(ck.params, w);
    FieldView view = make_field_view(ck.params, field, w);
    RenderOutput out = render_image(view, cam, pose, box, rspec);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        for (int c = 0; c < 3; ++c) strip.at(y, k * size + x, c) = out.rgb.at(y, x, c);
  }
  fs::create_directories(g.out_dir);
  std::string path = (fs::path(g.out_dir) / "interp.png").string();
  write_png(path, strip);

  ordered_json j;
  j["command"] = "interp";
  j["frames"] = frames;
  j["object_a"] = ck.object_ids[obj_a];
  j["object_b"] = ck.object_ids[obj_b];
  j["image"] = fs::path(path).filename().string();
  write_summary(g, j);
  if (!g.quiet) std::printf("wrote %s\n", path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tri-plane lifting pipeline: multi-view data, lifting, composition, evaluation"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "INI-style config file");
  app.add_option("--seed", g.seed, "master seed (all stages derive from it)");
  app.add_option("--out", g.out_dir, "output directory");
  app.add_option("--workers", g.workers, "worker threads (0 = hardware)");
  app.add_flag("--quiet", g.quiet, "suppress progress output");

  auto* gen = app.add_subcommand("gen-views", "generate a procedural multi-view dataset");
  int gen_objects = -1, gen_views = -1, gen_size = -1;
  double gen_radius = -1, gen_noise_az = -1, gen_noise_el = -1;
  gen->add_option("--objects", gen_objects, "number of objects");
  gen->add_option("--views", gen_views, "views per object");
  gen->add_option("--size", gen_size, "image size in pixels");
  gen->add_option("--radius", gen_radius, "camera orbit radius");
  gen->add_option("--noise-az", gen_noise_az, "pose-label azimuth noise (deg, sigma)");
  gen->add_option("--noise-el", gen_noise_el, "pose-label elevation noise (deg, sigma)");

  auto* lift = app.add_subcommand("lift", "fit the shared generator and per-object latents");
  std::string lift_data, lift_resume;
  int lift_iters = -1;
  lift->add_option("--data", lift_data, "dataset directory (from gen-views)")->required();
  lift->add_option("--iters", lift_iters, "iterations to run");
  lift->add_option("--resume", lift_resume, "checkpoint to continue from");

  auto* compose = app.add_subcommand("compose", "augment background frames with lifted objects");
  std::string compose_ckpt, compose_bg;
  int compose_objects = -1;
  compose->add_option("--checkpoint", compose_ckpt, "lifted checkpoint")->required();
  compose->add_option("--backgrounds", compose_bg, "directory of PNG frames + calibration")
      ->required();
  compose->add_option("--objects-per-frame", compose_objects, "objects to place per frame");

  auto* eval = app.add_subcommand("eval", "multi-view consistency report");
  std::string eval_ckpt;
  int eval_pairs = -1, eval_object = 0;
  double eval_offset = -1;
  bool eval_baseline = false;
  eval->add_option("--checkpoint", eval_ckpt, "lifted checkpoint")->required();
  eval->add_option("--pairs", eval_pairs, "number of view pairs");
  eval->add_option("--offset", eval_offset, "azimuth offset between views (deg)");
  eval->add_option("--object", eval_object, "object index to evaluate");
  eval->add_flag("--baseline", eval_baseline, "also score the inconsistency-injected baseline");

  auto* interp = app.add_subcommand("interp", "latent interpolation strip");
  std::string interp_ckpt;
  int interp_a = 0, interp_b = 1, interp_frames = 6;
  double interp_az = 30.0, interp_el = 10.0;
  interp->add_option("--checkpoint", interp_ckpt, "lifted checkpoint")->required();
  interp->add_option("--obj-a", interp_a, "first object index");
  interp->add_option("--obj-b", interp_b, "second object index");
  interp->add_option("--frames", interp_frames, "frames in the strip");
  interp->add_option("--azimuth", interp_az, "viewing azimuth (deg)");
  interp->add_option("--elevation", interp_el, "viewing elevation (deg)");

  CLI11_PARSE(app, argc, argv);

  worker_count() = g.workers > 0
                       ? g.workers
                       : std::max(1u, std::thread::hardware_concurrency());

  try {
    if (gen->parsed())
      return cmd_gen_views(g, gen_objects, gen_views, gen_size, gen_radius, gen_noise_az,
                           gen_noise_el);
    if (lift->parsed()) return cmd_lift(g, lift_data, lift_iters, lift_resume);
    if (compose->parsed()) return cmd_compose(g, compose_ckpt, compose_bg, compose_objects);
    if (eval->parsed())
      return cmd_eval(g, eval_ckpt, eval_pairs, eval_offset, eval_object, eval_baseline);
    if (interp->parsed())
      return cmd_interp(g, interp_ckpt, interp_a, interp_b, interp_frames, interp_az, interp_el);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
