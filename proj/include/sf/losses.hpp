#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sf/geometry.hpp"
#include "sf/tensor.hpp"

namespace sf {

struct LossWeights {
  // stage 1
  double loc = 0.1;
  double smooth = 0.001;
  double render_w = 0.01;
  // stage 2
  double warp = 0.02;
  double consist = 1e-5;
  // inner weights
  double perceptual = 0.05;       // on the render loss
  double warp_ssim = 0.1;
  double warp_perceptual = 0.05;
};

/// Optional differentiable perceptual distance. When absent every perceptual
/// term is exactly zero; the weights stay in place so a hook can be attached
/// without touching loss code.
using PerceptualHook = std::function<Tensor(const Tensor&, const Tensor&)>;

Tensor l1(const Tensor& a, const Tensor& b);
Tensor l2(const Tensor& a, const Tensor& b);

/// Mean SSIM over channels and valid (fully covered) window positions.
/// 11x11 Gaussian window, sigma 1.5, C1=1e-4, C2=9e-4, inputs in [0,1].
Tensor ssim(const Tensor& a, const Tensor& b);

/// Same-size per-pixel SSIM map (1,H,W), channel-averaged; borders use
/// replicate padding.
Tensor ssim_map(const Tensor& a, const Tensor& b);

/// 10*log10(1/MSE) in dB; +infinity when the images are identical.
double psnr(const Tensor& a, const Tensor& b);

/// Edge-aware first-order smoothness of mean-normalized disparity.
Tensor smoothness_loss(const Tensor& disparity, const Tensor& image);

struct ReprojectionSource {
  Tensor image;
  PinholeCamera cam;
};

/// Photometric reprojection: each source is warped into the target with the
/// rigid flow of the candidate depth, scored per pixel with
/// 0.85*(1-SSIM)/2 + 0.15*L1, and the per-pixel minimum over sources is
/// averaged.
Tensor reprojection_loss(const Tensor& target, const PinholeCamera& target_cam,
                         const std::vector<ReprojectionSource>& sources, const DepthMap& depth);

Tensor render_loss(const Tensor& rendered, const Tensor& gt, const PerceptualHook& hook = nullptr,
                   double lambda_p = 0.05);

Tensor warp_loss(const Tensor& target, const Tensor& warped, const PerceptualHook& hook = nullptr,
                 double lambda_s = 0.1, double lambda_wp = 0.05);

/// Symmetrized forward-backward gap, averaged over pixels.
Tensor consistency_loss(const FlowField& f_fwd, const FlowField& f_bwd);

struct LossBreakdown {
  double total = 0.0;
  std::map<std::string, double> items;
};

Tensor stage1_total(const Tensor& loc, const Tensor& smooth, const Tensor& render,
                    const LossWeights& w, LossBreakdown* breakdown = nullptr);
Tensor stage2_total(const Tensor& warp, const Tensor& consist, const Tensor& render,
                    const LossWeights& w, LossBreakdown* breakdown = nullptr);

struct DepthErrorMetrics {
  double abs_rel = 0.0, sq_rel = 0.0, rmse = 0.0;
};
DepthErrorMetrics depth_metrics(const DepthMap& pred, const DepthMap& gt,
                                const std::vector<std::uint8_t>& mask);

}  // namespace sf
