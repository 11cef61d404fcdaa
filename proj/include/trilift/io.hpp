// Copyright 2026 The trilift Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "trilift/errors.hpp"
#include "trilift/fit.hpp"
#include "trilift/generator.hpp"
#include "trilift/geometry.hpp"
#include "trilift/optim.hpp"

#include <json.hpp>

namespace trilift {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Checkpoint: single little-endian binary file.
//   bytes 0..7   magic "TLCKPT\0\0"
//   u32          version (1)
//   u64          config JSON length, then the JSON bytes
//   u64          tensor count, then per tensor:
//                  u32 name length, name bytes,
//                  u32 ndim, u32 dims[ndim], f64 data[numel]
// Tensors appear in declared parameter order: generator weights ("gen/..."),
// per-object latents ("latent/<id>"), and optionally optimizer state
// ("adam/m/...", "adam/v/...", "adam/step").

namespace detail {
inline void write_u32(std::FILE* f, uint32_t v) { std::fwrite(&v, 4, 1, f); }
inline void write_u64(std::FILE* f, uint64_t v) { std::fwrite(&v, 8, 1, f); }
inline uint32_t read_u32(std::FILE* f) {
  uint32_t v = 0;
  if (std::fread(&v, 4, 1, f) != 1) throw std::runtime_error("checkpoint truncated");
  return v;
}
inline uint64_t read_u64(std::FILE* f) {
  uint64_t v = 0;
  if (std::fread(&v, 8, 1, f) != 1) throw std::runtime_error("checkpoint truncated");
  return v;
}
inline void write_named_tensor(std::FILE* f, const std::string& name, const Tensor& t) {
  write_u32(f, static_cast<uint32_t>(name.size()));
  std::fwrite(name.data(), 1, name.size(), f);
  write_u32(f, static_cast<uint32_t>(t.shape.size()));
  for (int d : t.shape) write_u32(f, static_cast<uint32_t>(d));
  std::fwrite(t.data(), 8, t.numel(), f);
}
inline std::pair<std::string, Tensor> read_named_tensor(std::FILE* f) {
  uint32_t nl = read_u32(f);
  std::string name(nl, '\0');
  if (std::fread(name.data(), 1, nl, f) != nl) throw std::runtime_error("checkpoint truncated");
  uint32_t nd = read_u32(f);
  std::vector<int> shape(nd);
  for (uint32_t i = 0; i < nd; ++i) shape[i] = static_cast<int>(read_u32(f));
  Tensor t(shape);
  if (std::fread(t.data(), 8, t.numel(), f) != t.numel())
    throw std::runtime_error("checkpoint truncated");
  return {name, std::move(t)};
}
}  // namespace detail

inline ordered_json config_to_json(const GeneratorConfig& c) {
  ordered_json j;
  j["latent_dim"] = c.latent_dim;
  j["style_dim"] = c.style_dim;
  j["style_layers"] = c.style_layers;
  j["mapping_layers"] = c.mapping_layers;
  j["mapping_hidden"] = c.mapping_hidden;
  j["plane_resolution"] = c.plane_resolution;
  j["plane_channels"] = c.plane_channels;
  j["base_resolution"] = c.base_resolution;
  j["base_channels"] = c.base_channels;
  j["stage_channels"] = c.stage_channels;
  j["decoder_hidden"] = c.decoder_hidden;
  j["omega0"] = c.omega0;
  j["sigma_bias_init"] = c.sigma_bias_init;
  return j;
}

inline GeneratorConfig config_from_json(const ordered_json& j) {
  GeneratorConfig c;
  c.latent_dim = j.at("latent_dim");
  c.style_dim = j.at("style_dim");
  c.style_layers = j.at("style_layers");
  c.mapping_layers = j.at("mapping_layers");
  c.mapping_hidden = j.at("mapping_hidden");
  c.plane_resolution = j.at("plane_resolution");
  c.plane_channels = j.at("plane_channels");
  c.base_resolution = j.at("base_resolution");
  c.base_channels = j.at("base_channels");
  c.stage_channels = j.at("stage_channels").get<std::vector<int>>();
  c.decoder_hidden = j.at("decoder_hidden");
  c.omega0 = j.at("omega0");
  c.sigma_bias_init = j.at("sigma_bias_init");
  return c;
}

struct Checkpoint {
  GeneratorParams params;
  std::vector<std::string> object_ids;
  std::vector<Tensor> latents;
  std::optional<OptimState> optim;  // present when saved with training state
};

inline void save_checkpoint(const std::string& path, const GeneratorParams& params,
                            const std::vector<ObjectRecord>& records,
                            const OptimState* optim = nullptr) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write " + path);
  std::string cfg = config_to_json(params.config).dump();
  std::fwrite("TLCKPT\0\0", 1, 8, f);
  detail::write_u32(f, 1);
  detail::write_u64(f, cfg.size());
  std::fwrite(cfg.data(), 1, cfg.size(), f);

  std::vector<std::pair<std::string, const Tensor*>> entries;
  for_each_tensor(const_cast<GeneratorParams&>(params),
                  [&](const std::string& n, Tensor& t) { entries.emplace_back("gen/" + n, &t); });
  for (const auto& rec : records) entries.emplace_back("latent/" + rec.id, &rec.latent);
  Tensor step_t({1});
  if (optim) {
    step_t[0] = static_cast<double>(optim->step);
    entries.emplace_back("adam/step", &step_t);
    // Names parallel the slot order (generator tensors then latents).
  }
  std::vector<Tensor> moment_store;
  if (optim) {
    size_t slot = 0;
    std::vector<std::string> names;
    for_each_tensor(const_cast<GeneratorParams&>(params),
                    [&](const std::string& n, Tensor&) { names.push_back("gen/" + n); });
    for (const auto& rec : records) names.push_back("latent/" + rec.id);
    if (names.size() != optim->slots.size())
      throw ConfigError("optimizer state does not match checkpoint layout");
    for (; slot < optim->slots.size(); ++slot) {
      entries.emplace_back("adam/m/" + names[slot], &optim->slots[slot].m);
      entries.emplace_back("adam/v/" + names[slot], &optim->slots[slot].v);
    }
  }
  detail::write_u64(f, entries.size());
  for (auto& [name, t] : entries) detail::write_named_tensor(f, name, *t);
  std::fclose(f);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot read " + path);
  char magic[8];
  if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, "TLCKPT\0\0", 8) != 0) {
    std::fclose(f);
    throw std::runtime_error("bad checkpoint magic: " + path);
  }
  uint32_t version = detail::read_u32(f);
  if (version != 1) {
    std::fclose(f);
    throw std::runtime_error("unsupported checkpoint version");
  }
  uint64_t cfg_len = detail::read_u64(f);
  std::string cfg(cfg_len, '\0');
  if (std::fread(cfg.data(), 1, cfg_len, f) != cfg_len) {
    std::fclose(f);
    throw std::runtime_error("checkpoint truncated");
  }
  uint64_t count = detail::read_u64(f);
  std::map<std::string, Tensor> tensors;
  std::vector<std::string> order;
  for (uint64_t i = 0; i < count; ++i) {
    auto [name, t] = detail::read_named_tensor(f);
    order.push_back(name);
    tensors.emplace(name, std::move(t));
  }
  std::fclose(f);

  Checkpoint ck;
  GeneratorConfig gcfg = config_from_json(ordered_json::parse(cfg));
  ck.params = make_generator(gcfg, 0);
  for_each_tensor(ck.params, [&](const std::string& n, Tensor& t) {
    auto it = tensors.find("gen/" + n);
    if (it == tensors.end()) throw std::runtime_error("checkpoint missing tensor gen/" + n);
    if (it->second.shape != t.shape) throw std::runtime_error("checkpoint shape mismatch: " + n);
    t = it->second;
  });
  for (const auto& name : order)
    if (name.rfind("latent/", 0) == 0) {
      ck.object_ids.push_back(name.substr(7));
      ck.latents.push_back(tensors.at(name));
    }
  if (tensors.count("adam/step")) {
    OptimState st;
    st.step = static_cast<int64_t>(tensors.at("adam/step")[0]);
    std::vector<std::string> names;
    for_each_tensor(ck.params, [&](const std::string& n, Tensor&) { names.push_back("gen/" + n); });
    for (const auto& id : ck.object_ids) names.push_back("latent/" + id);
    for (const auto& n : names) {
      AdamSlot slot;
      slot.m = tensors.at("adam/m/" + n);
      slot.v = tensors.at("adam/v/" + n);
      st.slots.push_back(std::move(slot));
    }
    ck.optim = std::move(st);
  }
  return ck;
}

// ---------------------------------------------------------------------------
// Calibration file: plain-text key=value lines (fx, fy, cx, cy, width, height,
// cam_height_m) plus `extrinsic=` with 12 row-major values of the 3x4
// camera-to-world matrix [R|t]. '#' starts a comment.

struct Calibration {
  CameraIntrinsics cam;
  RigidPose pose;
  double cam_height_m = 1.65;
};

inline Calibration parse_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read calibration " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto need = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw ConfigError("calibration missing key " + k + " in " + path);
    return it->second;
  };
  Calibration c;
  c.cam = CameraIntrinsics(std::stod(need("fx")), std::stod(need("fy")), std::stod(need("cx")),
                           std::stod(need("cy")), std::stoi(need("width")),
                           std::stoi(need("height")));
  c.cam_height_m = std::stod(need("cam_height_m"));
  std::istringstream es(need("extrinsic"));
  double m[12];
  for (int i = 0; i < 12; ++i)
    if (!(es >> m[i])) throw ConfigError("calibration extrinsic needs 12 values in " + path);
  Mat3 r;
  r.m = {m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]};
  c.pose = RigidPose(r, {m[3], m[7], m[11]});
  return c;
}

inline void write_calibration(const std::string& path, const Calibration& c) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "fx=%.9g\nfy=%.9g\ncx=%.9g\ncy=%.9g\nwidth=%d\nheight=%d\ncam_height_m=%.9g\n",
                c.cam.fx, c.cam.fy, c.cam.cx, c.cam.cy, c.cam.width, c.cam.height, c.cam_height_m);
  out << buf << "extrinsic=";
  const Mat3& r = c.pose.rotation;
  const Vec3& t = c.pose.translation;
  double m[12] = {r(0, 0), r(0, 1), r(0, 2), t.x, r(1, 0), r(1, 1),
                  r(1, 2), t.y,     r(2, 0), r(2, 1), r(2, 2), t.z};
  for (int i = 0; i < 12; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g%s", m[i], i + 1 < 12 ? " " : "\n");
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// Loss-history CSV: step, l_rgb, l_iou, l_perc, total.

inline void write_loss_csv(const std::string& path, const std::vector<LossRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "step,l_rgb,l_iou,l_perc,total\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g\n",
                  static_cast<long long>(r.step), r.rgb, r.iou, r.perc, r.total);
    out << buf;
  }
}

inline std::vector<LossRow> read_loss_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<LossRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    LossRow r;
    long long step;
    if (std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf,%lf", &step, &r.rgb, &r.iou, &r.perc,
                    &r.total) == 5) {
      r.step = step;
      rows.push_back(r);
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Run configuration: INI-style sections of key=value pairs; '#' comments.
// CLI flags override file values.

class RunConfig {
 public:
  RunConfig() = default;

  static RunConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path);
    RunConfig cfg;
    std::string line, section;
    while (std::getline(in, line)) {
      auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      auto trim = [](std::string s) {
        size_t a = s.find_first_not_of(" \t\r");
        size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[' && line.back() == ']') {
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("bad config line: " + line);
      cfg.values_[section.empty() ? trim(line.substr(0, eq))
                                  : section + "." + trim(line.substr(0, eq))] =
          trim(line.substr(eq + 1));
    }
    return cfg;
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& dflt) const {
    auto it = values_.find(key);
    return it == values_.end() ? dflt : it->second;
  }
  double get_double(const std::string& key, double dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    try {
      return std::stod(it->second);
    } catch (...) {
      throw ConfigError("config key " + key + " is not a number: " + it->second);
    }
  }
  int get_int(const std::string& key, int dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    try {
      return std::stoi(it->second);
    } catch (...) {
      throw ConfigError("config key " + key + " is not an integer: " + it->second);
    }
  }
  uint64_t get_u64(const std::string& key, uint64_t dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    return std::stoull(it->second);
  }
  bool get_bool(const std::string& key, bool dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    return it->second == "true" || it->second == "1" || it->second == "yes";
  }

 private:
  std::map<std::string, std::string> values_;
};

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

}  // namespace trilift
