#include "sf/dataset.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "sf/io.hpp"

namespace sf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json world_to_json(const SyntheticWorldConfig& w) {
  return json{{"num_cameras", w.num_cameras},
              {"width", w.width},
              {"height", w.height},
              {"static_boxes", w.static_boxes},
              {"dynamic_objects", w.dynamic_objects},
              {"ego_speed", w.ego_speed},
              {"object_speed", w.object_speed},
              {"samples_per_scene", w.samples_per_scene},
              {"fov_deg", w.fov_deg},
              {"d_min", w.d_min},
              {"d_max", w.d_max},
              {"texture_seed", w.texture_seed}};
}

SyntheticWorldConfig world_from_json(const json& j) {
  SyntheticWorldConfig w;
  w.num_cameras = j.value("num_cameras", w.num_cameras);
  w.width = j.value("width", w.width);
  w.height = j.value("height", w.height);
  w.static_boxes = j.value("static_boxes", w.static_boxes);
  w.dynamic_objects = j.value("dynamic_objects", w.dynamic_objects);
  w.ego_speed = j.value("ego_speed", w.ego_speed);
  w.object_speed = j.value("object_speed", w.object_speed);
  w.samples_per_scene = j.value("samples_per_scene", w.samples_per_scene);
  w.fov_deg = j.value("fov_deg", w.fov_deg);
  w.d_min = j.value("d_min", w.d_min);
  w.d_max = j.value("d_max", w.d_max);
  w.texture_seed = j.value("texture_seed", w.texture_seed);
  return w;
}

}  // namespace

void save_sample(const std::string& dir, const SceneSample& sample) {
  fs::create_directories(dir);
  json meta{{"scene_seed", sample.scene_seed},
            {"index", sample.index},
            {"num_cameras", sample.cams.size()}};
  std::ofstream(fs::path(dir) / "sample.json") << meta.dump(2) << "\n";

  std::vector<PinholeCamera> rig_t, rig_t1, rig_mid;
  for (const CameraFrame& f : sample.cams) {
    rig_t.push_back(f.cam_t);
    rig_t1.push_back(f.cam_t1);
    rig_mid.push_back(f.cam_mid);
  }
  save_rig((fs::path(dir) / "rig_t.txt").string(), rig_t);
  save_rig((fs::path(dir) / "rig_t1.txt").string(), rig_t1);
  save_rig((fs::path(dir) / "rig_mid.txt").string(), rig_mid);

  for (size_t c = 0; c < sample.cams.size(); ++c) {
    const CameraFrame& f = sample.cams[c];
    const fs::path cd = fs::path(dir) / ("cam" + std::to_string(c));
    fs::create_directories(cd);
    io::save_ppm((cd / "image_t.ppm").string(), f.image_t);
    io::save_ppm((cd / "image_t1.ppm").string(), f.image_t1);
    io::save_ppm((cd / "image_mid.ppm").string(), f.image_mid);
    io::save_pfm((cd / "depth_t.pfm").string(), f.depth_t);
    io::save_pfm((cd / "depth_t1.pfm").string(), f.depth_t1);
    io::save_flo((cd / "flow_fwd.flo").string(), f.flow_fwd);
    io::save_flo((cd / "flow_bwd.flo").string(), f.flow_bwd);
    const long h = f.cam_t.height, w = f.cam_t.width;
    io::save_pgm((cd / "vis_fwd.pgm").string(), f.vis_fwd, h, w);
    io::save_pgm((cd / "vis_bwd.pgm").string(), f.vis_bwd, h, w);
    io::save_pgm((cd / "dyn_t.pgm").string(), f.dyn_t, h, w);
    io::save_pgm((cd / "dyn_t1.pgm").string(), f.dyn_t1, h, w);
  }
}

SceneSample load_sample(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / "sample.json");
  if (!mf) throw IoError("load_sample: missing sample.json in " + dir);
  json meta = json::parse(mf);
  SceneSample sample;
  sample.scene_seed = meta.value("scene_seed", 0ull);
  sample.index = meta.value("index", 0);
  const size_t cams = meta.at("num_cameras").get<size_t>();

  std::vector<PinholeCamera> rig_t = load_rig((fs::path(dir) / "rig_t.txt").string());
  std::vector<PinholeCamera> rig_t1 = load_rig((fs::path(dir) / "rig_t1.txt").string());
  std::vector<PinholeCamera> rig_mid = load_rig((fs::path(dir) / "rig_mid.txt").string());
  if (rig_t.size() != cams || rig_t1.size() != cams || rig_mid.size() != cams)
    throw IoError("load_sample: rig size mismatch in " + dir);

  for (size_t c = 0; c < cams; ++c) {
    const fs::path cd = fs::path(dir) / ("cam" + std::to_string(c));
    CameraFrame f;
    f.cam_t = rig_t[c];
    f.cam_t1 = rig_t1[c];
    f.cam_mid = rig_mid[c];
    f.image_t = io::load_ppm((cd / "image_t.ppm").string());
    f.image_t1 = io::load_ppm((cd / "image_t1.ppm").string());
    f.image_mid = io::load_ppm((cd / "image_mid.ppm").string());
    f.depth_t = io::load_pfm((cd / "depth_t.pfm").string());
    f.depth_t1 = io::load_pfm((cd / "depth_t1.pfm").string());
    f.flow_fwd = io::load_flo((cd / "flow_fwd.flo").string());
    f.flow_bwd = io::load_flo((cd / "flow_bwd.flo").string());
    long h = 0, w = 0;
    f.vis_fwd = io::load_pgm((cd / "vis_fwd.pgm").string(), h, w);
    f.vis_bwd = io::load_pgm((cd / "vis_bwd.pgm").string(), h, w);
    f.dyn_t = io::load_pgm((cd / "dyn_t.pgm").string(), h, w);
    f.dyn_t1 = io::load_pgm((cd / "dyn_t1.pgm").string(), h, w);
    sample.cams.push_back(std::move(f));
  }
  return sample;
}

void save_dataset(const std::string& dir, const Dataset& dataset) {
  fs::create_directories(dir);
  json meta{{"world", world_to_json(dataset.world)}, {"samples", json::array()}};
  for (size_t i = 0; i < dataset.samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sample%04zu", i);
    meta["samples"].push_back(name);
    save_sample((fs::path(dir) / name).string(), dataset.samples[i]);
  }
  std::ofstream(fs::path(dir) / "dataset.json") << meta.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream mf(fs::path(dir) / "dataset.json");
  if (!mf) throw IoError("load_dataset: missing dataset.json in " + dir);
  json meta = json::parse(mf);
  Dataset d;
  d.world = world_from_json(meta.at("world"));
  for (const auto& name : meta.at("samples"))
    d.samples.push_back(load_sample((fs::path(dir) / name.get<std::string>()).string()));
  return d;
}

}  // namespace sf
