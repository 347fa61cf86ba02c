#pragma once

#include <vector>

#include "sf/geometry.hpp"
#include "sf/tensor.hpp"

namespace sf {

long sh_coeff_count(int degree);  // 3 * (degree+1)^2

/// Set of 3D Gaussian primitives. Attribute tensors are row-per-primitive and
/// already activated: unit quaternions, positive scales (meters), opacities in
/// (0,1). SH layout: 3 DC coefficients (r,g,b) followed, for degree 1, by 9
/// higher-order coefficients grouped per color channel.
struct GaussianCloud {
  Tensor means;      // (N,3) world meters
  Tensor rotations;  // (N,4) unit quaternions, (w,x,y,z)
  Tensor scales;     // (N,3)
  Tensor opacities;  // (N,1)
  Tensor sh;         // (N, sh_coeff_count(sh_degree))
  int sh_degree = 1;

  // Provenance of pixel-aligned clouds: consecutive row blocks, one per source
  // camera, rows in row-major pixel order. Required by displace_means.
  struct PixelBlock {
    int camera = 0;
    long height = 0, width = 0;
  };
  std::vector<PixelBlock> pixel_blocks;

  long count() const { return means.defined() ? means.size(0) : 0; }
  void validate() const;
};

/// Sigma = R diag(s) diag(s) R^T for a single primitive. Plain value (no
/// graph); the differentiable path lives inside the renderer.
Tensor covariance(const Tensor& rotation, const Tensor& scale);

struct CloudParams {
  double s_max = 0.5;       // scale clamp, meters
  double s_min = 1e-4;
  int sh_degree = 1;
};

/// Raw (pre-activation) per-pixel attribute maps, the output of the Gaussian
/// parameter network.
struct RawAttributeMaps {
  Tensor rotation;  // (4,H,W)
  Tensor scale;     // (3,H,W)
  Tensor opacity;   // (1,H,W)
  Tensor sh;        // (3*(L+1)^2,H,W)
};

/// One Gaussian per pixel: means from unprojected depth, quaternions
/// normalized, scales exp-activated and clamped to [s_min, s_max], opacities
/// sigmoid-activated.
GaussianCloud pixel_aligned_cloud(const DepthMap& depth, const RawAttributeMaps& raw,
                                  const PinholeCamera& cam, const CloudParams& params,
                                  int camera_index);

/// Rigid transform of the cloud: means moved, rotations left-multiplied by the
/// transform's rotation, everything else untouched.
GaussianCloud to_world(const GaussianCloud& cloud, const Eigen::Matrix4d& transform);

/// Pure concatenation, camera order preserved. No de-duplication.
GaussianCloud fuse(const std::vector<GaussianCloud>& clouds);

/// Moves each mean toward its flow target: the source pixel is advanced by the
/// total flow, lifted to 3D with the target-frame depth sampled at the flowed
/// position, and the mean is moved by alpha times the resulting displacement.
/// flows/depths/cams are indexed by the pixel blocks' camera ids.
GaussianCloud displace_means(const GaussianCloud& cloud, const std::vector<FlowField>& flow_total,
                             const std::vector<DepthMap>& depth_t1,
                             const std::vector<PinholeCamera>& cams_t1, double alpha);

}  // namespace sf
