#pragma once

#include <string>
#include <vector>

#include "sf/dataset.hpp"
#include "sf/nets.hpp"
#include "sf/splatter.hpp"

namespace sf {

struct CameraInference {
  DepthMap depth_t, depth_t1;
  FlowField rigid_fwd, rigid_bwd;        // t->t1 on the t grid / t1->t on the t1 grid
  FlowField residual_fwd, residual_bwd;
  FlowField total_fwd, total_bwd;
  // Residual pyramid outputs (index = level), kept for deep supervision;
  // empty when the residual network is disabled.
  std::vector<Tensor> residual_levels_fwd, residual_levels_bwd;
};

struct SampleInference {
  std::vector<CameraInference> cams;
  GaussianCloud fused_t;        // pixel-aligned clouds of frame t, fused
  GaussianCloud displaced_t1;   // means advanced by the full forward flow
};

/// One feed-forward pass over a surround-view sample. No optimization; graph
/// recording follows the weights' trainable flags, so the same path serves
/// training and inference.
SampleInference forward_sample(const SceneSample& sample, const NetworkWeights& w,
                               bool use_residual);

RenderConfig render_config_for(const SceneSample& sample, const ArchitectureConfig& arch);

/// Mid-frame novel views: cloud displaced by half the forward flow, rendered
/// from the time-interpolated pose of each camera.
std::vector<Tensor> render_midframe(const SceneSample& sample, const NetworkWeights& w,
                                    bool use_residual, SampleInference* precomputed = nullptr);

struct EvalMetrics {
  double psnr = 0.0;
  double ssim = 0.0;
  double abs_rel = 0.0, sq_rel = 0.0, rmse = 0.0;
  double mean_consistency_gap = 0.0;
  long count = 0;  // evaluated (sample, camera) pairs
};

/// Aggregates mid-frame PSNR/SSIM, depth errors, and flow consistency over a
/// dataset. When jsonl_path is non-empty, one flat record per (sample, camera)
/// is appended there.
EvalMetrics evaluate(const Dataset& data, const NetworkWeights& w, bool use_residual,
                     const std::string& jsonl_path = "");

/// Writes every inference product for one sample: PFM depths, .flo flows, PLY
/// clouds, and PPM + 16-bit PNG renders.
void export_inference(const SceneSample& sample, const NetworkWeights& w, bool use_residual,
                      const std::string& out_dir);

}  // namespace sf
