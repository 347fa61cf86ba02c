#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "sf/tensor.hpp"

namespace sf {

/// Intrinsics plus a rigid camera-to-world pose. Validated at construction:
/// positive focals, orthonormal rotation with determinant +1 (to 1e-9).
struct PinholeCamera {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  long width = 0, height = 0;
  Eigen::Matrix4d cam_to_world = Eigen::Matrix4d::Identity();

  PinholeCamera() = default;
  PinholeCamera(double fx, double fy, double cx, double cy, long width, long height,
                const Eigen::Matrix4d& cam_to_world);

  Eigen::Matrix3d rotation() const { return cam_to_world.topLeftCorner<3, 3>(); }
  Eigen::Vector3d center() const { return cam_to_world.topRightCorner<3, 1>(); }
  Eigen::Matrix4d world_to_cam() const;

  bool same_intrinsics(const PinholeCamera& o) const;
  bool same_pose(const PinholeCamera& o) const;  // exact, bitwise
};

void validate_rigid(const Eigen::Matrix4d& t, double tol, const char* what);

/// Per-pixel 2D displacement in pixels; channel 0 is dx, channel 1 is dy,
/// defined on the source frame's pixel grid. Finite values only.
struct FlowField {
  Tensor t;  // (2,H,W)
  FlowField() = default;
  explicit FlowField(Tensor flow);
  long height() const { return t.size(1); }
  long width() const { return t.size(2); }
};

/// Metric depth along the camera z axis, shape (1,H,W), strictly positive.
struct DepthMap {
  Tensor t;
  DepthMap() = default;
  explicit DepthMap(Tensor depth);
  long height() const { return t.size(1); }
  long width() const { return t.size(2); }
};

/// Constant (2,H,W) grid of pixel coordinates (x, y).
Tensor pixel_grid(long height, long width);

/// Applies a rigid 4x4 transform to a (3,H,W) point tensor, differentiably.
Tensor apply_rigid(const Tensor& points, const Eigen::Matrix4d& transform);

/// Back-projects each pixel: X_cam = d * K^-1 (u,v,1); returns world points
/// (3,H,W). Differentiable in depth.
Tensor unproject(const DepthMap& depth, const PinholeCamera& cam);

struct Projection {
  Tensor pixels;  // (2,N)
  Tensor depths;  // (1,N) camera-frame z
  std::vector<std::uint8_t> valid;  // z > 1e-6
};
/// Projects world points (3,N) into the camera. Points behind the camera are
/// flagged in `valid` rather than thrown; their pixel values use a clamped z.
Projection project(const Tensor& points, const PinholeCamera& cam);

struct RigidFlow {
  FlowField flow;
  std::vector<std::uint8_t> valid;  // 0 where the reprojection lands behind the camera
};
/// Flow induced by ego-motion on static geometry: unproject with depth at t,
/// reproject into the camera at t+1. Identically zero (constant, no graph)
/// when the two cameras coincide. Differentiable in depth.
RigidFlow rigid_flow(const DepthMap& depth_t, const PinholeCamera& cam_t,
                     const PinholeCamera& cam_t1);

FlowField compose_flow(const FlowField& rigid, const FlowField& residual);

/// Backward warping: output(p) = source sampled at p + flow(p). The flow lives
/// on the target grid and points toward source coordinates.
Tensor warp_image(const Tensor& source, const FlowField& flow_target_to_source);

/// gap(p) = || f_fwd(p) + f_bwd(p + f_fwd(p)) ||_2, shape (1,H,W).
Tensor forward_backward_gap(const FlowField& f_fwd, const FlowField& f_bwd);

/// Linear translation, normalized quaternion blend for rotation. Exact copy
/// when the two poses are bitwise identical.
Eigen::Matrix4d interpolate_pose(const Eigen::Matrix4d& a, const Eigen::Matrix4d& b, double t);

// Plain-text rig files: per camera fx fy cx cy width height and a row-major
// 4x4 cam_to_world matrix.
void save_rig(const std::string& path, const std::vector<PinholeCamera>& rig);
std::vector<PinholeCamera> load_rig(const std::string& path);

}  // namespace sf
