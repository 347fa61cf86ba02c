#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sf/geometry.hpp"
#include "sf/tensor.hpp"

namespace sf {

/// Everything one camera contributes to a two-frame training sample, with the
/// synthetic ground truth alongside.
struct CameraFrame {
  PinholeCamera cam_t, cam_t1, cam_mid;
  Tensor image_t, image_t1, image_mid;  // (3,H,W) in [0,1]
  Tensor depth_t, depth_t1;             // (1,H,W) metric
  Tensor flow_fwd;                      // (2,H,W) on the t grid, toward t+1
  Tensor flow_bwd;                      // (2,H,W) on the t+1 grid, toward t
  // Mutual-visibility masks (1 = the pixel's point is visible in the other
  // frame and its resample window stays on one object).
  std::vector<std::uint8_t> vis_fwd, vis_bwd;
  std::vector<std::uint8_t> dyn_t, dyn_t1;  // 1 = pixel belongs to a moving object
};

struct SceneSample {
  std::vector<CameraFrame> cams;
  std::uint64_t scene_seed = 0;
  int index = 0;  // position within its scene's trajectory
};

struct SyntheticWorldConfig {
  int num_cameras = 4;
  long width = 96, height = 64;
  int static_boxes = 5;
  int dynamic_objects = 3;
  double ego_speed = 0.6;      // meters per frame along +x
  double object_speed = 0.35;   // typical dynamic-object speed, m/frame
  int samples_per_scene = 4;
  double fov_deg = 80.0;
  double d_min = 1.0, d_max = 80.0;
  std::uint64_t texture_seed = 7;
};

struct Dataset {
  SyntheticWorldConfig world;
  std::vector<SceneSample> samples;
};

void save_sample(const std::string& dir, const SceneSample& sample);
SceneSample load_sample(const std::string& dir);
void save_dataset(const std::string& dir, const Dataset& dataset);
Dataset load_dataset(const std::string& dir);

}  // namespace sf
