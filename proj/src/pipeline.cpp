#include "sf/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "sf/io.hpp"
#include "sf/losses.hpp"

namespace sf {

namespace fs = std::filesystem;
using nlohmann::json;

RenderConfig render_config_for(const SceneSample& sample, const ArchitectureConfig& arch) {
  RenderConfig rc;
  rc.width = sample.cams.at(0).cam_t.width;
  rc.height = sample.cams.at(0).cam_t.height;
  rc.near = 0.5 * arch.d_min;
  rc.far = 1.5 * arch.d_max;
  rc.sh_degree = arch.sh_degree;
  return rc;
}

namespace {

CloudParams cloud_params_for(const SceneSample& sample, const ArchitectureConfig& arch) {
  CloudParams cp;
  cp.sh_degree = arch.sh_degree;
  const PinholeCamera& cam = sample.cams.at(0).cam_t;
  cp.s_max = arch.s_max(std::min(cam.fx, cam.fy));
  return cp;
}

FlowField zero_flow_like(const PinholeCamera& cam) {
  return FlowField(Tensor::zeros({2, cam.height, cam.width}));
}

}  // namespace

SampleInference forward_sample(const SceneSample& sample, const NetworkWeights& w,
                               bool use_residual) {
  if (static_cast<int>(sample.cams.size()) > w.config.num_cameras)
    throw ContractError("forward_sample: sample has more cameras than the model");
  if (use_residual && !w.has_residual_net())
    throw ContractError("forward_sample: checkpoint has no residual flow network");
  const CloudParams cp = cloud_params_for(sample, w.config);

  SampleInference out;
  std::vector<GaussianCloud> clouds;
  std::vector<FlowField> flows_fwd;
  std::vector<DepthMap> depths_t1;
  std::vector<PinholeCamera> cams_t1;
  for (size_t c = 0; c < sample.cams.size(); ++c) {
    const CameraFrame& f = sample.cams[c];
    CameraInference ci;
    ci.depth_t = depth_forward(w, f.image_t);
    ci.depth_t1 = depth_forward(w, f.image_t1);
    ci.rigid_fwd = rigid_flow(ci.depth_t, f.cam_t, f.cam_t1).flow;
    ci.rigid_bwd = rigid_flow(ci.depth_t1, f.cam_t1, f.cam_t).flow;
    if (use_residual) {
      Tensor warped_to_t1 = warp_image(f.image_t, ci.rigid_bwd);
      ResidualFlowResult bwd = residual_flow_forward(w, warped_to_t1, f.image_t1, ci.rigid_bwd,
                                                     static_cast<int>(c));
      ci.residual_bwd = bwd.flow;
      ci.residual_levels_bwd = std::move(bwd.levels);
      Tensor warped_to_t = warp_image(f.image_t1, ci.rigid_fwd);
      ResidualFlowResult fwd = residual_flow_forward(w, warped_to_t, f.image_t, ci.rigid_fwd,
                                                     static_cast<int>(c));
      ci.residual_fwd = fwd.flow;
      ci.residual_levels_fwd = std::move(fwd.levels);
    } else {
      ci.residual_fwd = zero_flow_like(f.cam_t);
      ci.residual_bwd = zero_flow_like(f.cam_t1);
    }
    ci.total_fwd = compose_flow(ci.rigid_fwd, ci.residual_fwd);
    ci.total_bwd = compose_flow(ci.rigid_bwd, ci.residual_bwd);

    RawAttributeMaps raw = gauss_param_forward(w, f.image_t, ci.depth_t);
    clouds.push_back(pixel_aligned_cloud(ci.depth_t, raw, f.cam_t, cp, static_cast<int>(c)));

    flows_fwd.push_back(ci.total_fwd);
    depths_t1.push_back(ci.depth_t1);
    cams_t1.push_back(f.cam_t1);
    out.cams.push_back(std::move(ci));
  }
  out.fused_t = fuse(clouds);
  out.displaced_t1 = displace_means(out.fused_t, flows_fwd, depths_t1, cams_t1, 1.0);
  return out;
}

std::vector<Tensor> render_midframe(const SceneSample& sample, const NetworkWeights& w,
                                    bool use_residual, SampleInference* precomputed) {
  SampleInference local;
  SampleInference& inf = precomputed ? *precomputed : local;
  if (!precomputed) local = forward_sample(sample, w, use_residual);

  std::vector<FlowField> flows;
  std::vector<DepthMap> depths;
  std::vector<PinholeCamera> cams_t1;
  for (size_t c = 0; c < sample.cams.size(); ++c) {
    flows.push_back(inf.cams[c].total_fwd);
    depths.push_back(inf.cams[c].depth_t1);
    cams_t1.push_back(sample.cams[c].cam_t1);
  }
  GaussianCloud mid = displace_means(inf.fused_t, flows, depths, cams_t1, 0.5);
  RenderConfig rc = render_config_for(sample, w.config);
  std::vector<Tensor> renders;
  for (size_t c = 0; c < sample.cams.size(); ++c) {
    const CameraFrame& f = sample.cams[c];
    PinholeCamera cam_mid(f.cam_t.fx, f.cam_t.fy, f.cam_t.cx, f.cam_t.cy, f.cam_t.width,
                          f.cam_t.height,
                          interpolate_pose(f.cam_t.cam_to_world, f.cam_t1.cam_to_world, 0.5));
    renders.push_back(render(mid, cam_mid, rc).image);
  }
  return renders;
}

EvalMetrics evaluate(const Dataset& data, const NetworkWeights& w, bool use_residual,
                     const std::string& jsonl_path) {
  EvalMetrics m;
  std::ofstream jsonl;
  if (!jsonl_path.empty()) {
    jsonl.open(jsonl_path);
    if (!jsonl) throw IoError("evaluate: cannot open " + jsonl_path);
  }
  auto num_or_inf = [](double v) -> json {
    if (std::isinf(v)) return "inf";
    return v;
  };
  for (const SceneSample& sample : data.samples) {
    SampleInference inf = forward_sample(sample, w, use_residual);
    std::vector<Tensor> mids = render_midframe(sample, w, use_residual, &inf);
    for (size_t c = 0; c < sample.cams.size(); ++c) {
      const CameraFrame& f = sample.cams[c];
      const double p = psnr(mids[c], f.image_mid);
      const double s = ssim(mids[c], f.image_mid).item();
      std::vector<std::uint8_t> all(f.depth_t.data().size(), 1);
      DepthErrorMetrics dm = depth_metrics(inf.cams[c].depth_t, DepthMap(f.depth_t), all);
      const double gap =
          reduce_mean(forward_backward_gap(inf.cams[c].total_fwd, inf.cams[c].total_bwd)).item();
      m.psnr += p;
      m.ssim += s;
      m.abs_rel += dm.abs_rel;
      m.sq_rel += dm.sq_rel;
      m.rmse += dm.rmse;
      m.mean_consistency_gap += gap;
      ++m.count;
      if (jsonl.is_open()) {
        json rec{{"scene_seed", sample.scene_seed}, {"sample", sample.index},
                 {"camera", c},                     {"psnr", num_or_inf(p)},
                 {"ssim", s},                       {"abs_rel", dm.abs_rel},
                 {"sq_rel", dm.sq_rel},             {"rmse", dm.rmse},
                 {"consistency_gap", gap}};
        jsonl << rec.dump() << "\n";
      }
    }
  }
  if (m.count > 0) {
    m.psnr /= m.count;
    m.ssim /= m.count;
    m.abs_rel /= m.count;
    m.sq_rel /= m.count;
    m.rmse /= m.count;
    m.mean_consistency_gap /= m.count;
  }
  return m;
}

void export_inference(const SceneSample& sample, const NetworkWeights& w, bool use_residual,
                      const std::string& out_dir) {
  fs::create_directories(out_dir);
  SampleInference inf = forward_sample(sample, w, use_residual);
  std::vector<Tensor> mids = render_midframe(sample, w, use_residual, &inf);
  RenderConfig rc = render_config_for(sample, w.config);

  io::save_ply((fs::path(out_dir) / "cloud_t.ply").string(), inf.fused_t);
  io::save_ply((fs::path(out_dir) / "cloud_displaced.ply").string(), inf.displaced_t1);

  std::ofstream log(fs::path(out_dir) / "render_log.txt");
  for (size_t c = 0; c < sample.cams.size(); ++c) {
    const CameraFrame& f = sample.cams[c];
    const fs::path cd = fs::path(out_dir) / ("cam" + std::to_string(c));
    fs::create_directories(cd);
    const CameraInference& ci = inf.cams[c];
    io::save_pfm((cd / "depth_t.pfm").string(), ci.depth_t.t);
    io::save_pfm((cd / "depth_t1.pfm").string(), ci.depth_t1.t);
    io::save_flo((cd / "rigid_fwd.flo").string(), ci.rigid_fwd.t);
    io::save_flo((cd / "rigid_bwd.flo").string(), ci.rigid_bwd.t);
    io::save_flo((cd / "residual_fwd.flo").string(), ci.residual_fwd.t);
    io::save_flo((cd / "residual_bwd.flo").string(), ci.residual_bwd.t);
    io::save_flo((cd / "total_fwd.flo").string(), ci.total_fwd.t);
    io::save_flo((cd / "total_bwd.flo").string(), ci.total_bwd.t);

    RenderOutput view_t1 = render(inf.displaced_t1, f.cam_t1, rc);
    io::save_ppm((cd / "render_t1.ppm").string(), view_t1.image);
    io::save_png16((cd / "render_t1.png").string(), view_t1.image);
    io::save_ppm((cd / "render_mid.ppm").string(), mids[c]);
    io::save_png16((cd / "render_mid.png").string(), mids[c]);
    log << "render cam=" << c << " view=t1 culled=" << view_t1.stats.culled
        << " skipped_singular=" << view_t1.stats.skipped_singular
        << " mean_blended=" << view_t1.stats.mean_blended << "\n";
  }
}

}  // namespace sf
