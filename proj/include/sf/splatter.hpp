#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "sf/gaussians.hpp"
#include "sf/geometry.hpp"
#include "sf/tensor.hpp"

namespace sf {

struct RenderConfig {
  long width = 0, height = 0;
  std::array<double, 3> background{0.0, 0.0, 0.0};
  double near = 0.1, far = 1000.0;
  int sh_degree = 1;
  double alpha_cutoff = 1.0 / 255.0;      // contributions below this are skipped
  double transmittance_floor = 1e-4;      // early stop once T drops below
  double dilation = 0.3;                  // px^2 added to the 2D covariance diagonal
  void validate() const;
};

/// Image-plane footprint of one primitive.
struct ProjectedGaussian {
  double mean2d[2] = {0, 0};
  double cov2d[3] = {0, 0, 0};  // (xx, xy, yy), dilation included
  double depth = 0;             // camera-frame z
  double color[3] = {0, 0, 0};  // SH evaluated along the view ray, clamped to [0,1]
  double opacity = 0;
  bool valid = false;
};

struct RenderStats {
  long total = 0;
  long culled = 0;             // outside (near, far) or degenerate rotation
  long skipped_singular = 0;   // 2D covariance not invertible after dilation
  double mean_blended = 0.0;   // average composited contributions per pixel
};

/// EWA-style projection of every primitive; invalid ones are masked, never
/// thrown. Plain values — the differentiable path is render().
std::vector<ProjectedGaussian> project_gaussians(const GaussianCloud& cloud,
                                                 const PinholeCamera& cam,
                                                 const RenderConfig& cfg,
                                                 RenderStats* stats = nullptr);

struct RasterImage {
  std::vector<double> image;  // (3,H,W)
  std::vector<double> alpha;  // (1,H,W)
  RenderStats stats;
};

/// Front-to-back alpha compositing with footprint culling, contribution
/// cutoff, and transmittance early-stop. Sorts by depth internally (ties
/// broken by input index). Forward only.
RasterImage rasterize(const std::vector<ProjectedGaussian>& projected, const RenderConfig& cfg);

/// Brute-force reference: every pixel composites every Gaussian in exact depth
/// order with no cutoffs, culling, or early stop.
std::vector<double> rasterize_oracle(const std::vector<ProjectedGaussian>& projected,
                                     const RenderConfig& cfg);

struct RenderOutput {
  Tensor image;  // (3,H,W)
  Tensor alpha;  // (1,H,W)
  RenderStats stats;
};

/// The differentiable entry point: projection plus rasterization as a single
/// graph op over all cloud attribute tensors.
RenderOutput render(const GaussianCloud& cloud, const PinholeCamera& cam,
                    const RenderConfig& cfg);

}  // namespace sf
