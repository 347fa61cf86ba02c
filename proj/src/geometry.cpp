#include "sf/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace sf {

namespace {
constexpr double kZEps = 1e-6;
}

PinholeCamera::PinholeCamera(double fx_, double fy_, double cx_, double cy_, long width_,
                             long height_, const Eigen::Matrix4d& c2w)
    : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(width_), height(height_), cam_to_world(c2w) {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ContractError("camera: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ContractError("camera: image size must be positive");
  validate_rigid(cam_to_world, 1e-9, "cam_to_world");
}

void validate_rigid(const Eigen::Matrix4d& t, double tol, const char* what) {
  Eigen::Matrix3d r = t.topLeftCorner<3, 3>();
  double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho > tol || r.determinant() < 0.0)
    throw ContractError(std::string(what) + ": not a rigid transform (orthonormality residual " +
                        std::to_string(ortho) + ")");
  if ((t.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > tol)
    throw ContractError(std::string(what) + ": bottom row must be [0 0 0 1]");
}

Eigen::Matrix4d PinholeCamera::world_to_cam() const {
  Eigen::Matrix4d inv = Eigen::Matrix4d::Identity();
  Eigen::Matrix3d rt = rotation().transpose();
  inv.topLeftCorner<3, 3>() = rt;
  inv.topRightCorner<3, 1>() = -rt * center();
  return inv;
}

bool PinholeCamera::same_intrinsics(const PinholeCamera& o) const {
  return fx == o.fx && fy == o.fy && cx == o.cx && cy == o.cy && width == o.width &&
         height == o.height;
}

bool PinholeCamera::same_pose(const PinholeCamera& o) const {
  return same_intrinsics(o) && cam_to_world == o.cam_to_world;
}

FlowField::FlowField(Tensor flow) : t(std::move(flow)) {
  if (t.rank() != 3 || t.size(0) != 2)
    throw ShapeError("FlowField: expected (2,H,W), got " + shape_str(t.shape()));
  for (double v : t.data())
    if (!std::isfinite(v)) throw DomainError("FlowField: non-finite value");
}

DepthMap::DepthMap(Tensor depth) : t(std::move(depth)) {
  if (t.rank() != 3 || t.size(0) != 1)
    throw ShapeError("DepthMap: expected (1,H,W), got " + shape_str(t.shape()));
  for (double v : t.data())
    if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("DepthMap: non-positive depth value");
}

Tensor pixel_grid(long height, long width) {
  std::vector<double> g(2 * height * width);
  for (long y = 0; y < height; ++y)
    for (long x = 0; x < width; ++x) {
      g[y * width + x] = static_cast<double>(x);
      g[height * width + y * width + x] = static_cast<double>(y);
    }
  return Tensor::from_data({2, height, width}, std::move(g));
}

Tensor apply_rigid(const Tensor& points, const Eigen::Matrix4d& transform) {
  if (points.rank() != 3 || points.size(0) != 3)
    throw ShapeError("apply_rigid: expected (3,H,W)");
  Tensor x = slice(points, 0, 0, 1), y = slice(points, 0, 1, 1), z = slice(points, 0, 2, 1);
  const Eigen::Matrix4d& m = transform;
  Tensor ox = x * m(0, 0) + y * m(0, 1) + z * m(0, 2) + m(0, 3);
  Tensor oy = x * m(1, 0) + y * m(1, 1) + z * m(1, 2) + m(1, 3);
  Tensor oz = x * m(2, 0) + y * m(2, 1) + z * m(2, 2) + m(2, 3);
  return concat({ox, oy, oz}, 0);
}

Tensor unproject(const DepthMap& depth, const PinholeCamera& cam) {
  const long h = depth.height(), w = depth.width();
  if (h != cam.height || w != cam.width)
    throw ShapeError("unproject: depth resolution does not match the camera");
  std::vector<double> dirs(3 * h * w);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      const long i = y * w + x;
      dirs[i] = (static_cast<double>(x) - cam.cx) / cam.fx;
      dirs[h * w + i] = (static_cast<double>(y) - cam.cy) / cam.fy;
      dirs[2 * h * w + i] = 1.0;
    }
  Tensor rays = Tensor::from_data({3, h, w}, std::move(dirs));
  Tensor cam_points = mul(depth.t, rays);  // (1,H,W) broadcast with (3,H,W)
  return apply_rigid(cam_points, cam.cam_to_world);
}

Projection project(const Tensor& points, const PinholeCamera& cam) {
  if (points.rank() != 2 || points.size(0) != 3)
    throw ShapeError("project: expected points of shape (3,N)");
  const long n = points.size(1);
  Tensor p3 = reshape(points, {3, 1, n});
  Tensor c = apply_rigid(p3, cam.world_to_cam());
  Tensor x = slice(c, 0, 0, 1), y = slice(c, 0, 1, 1), z = slice(c, 0, 2, 1);
  Tensor z_safe = maximum(z, kZEps);
  Tensor u = x / z_safe * cam.fx + cam.cx;
  Tensor v = y / z_safe * cam.fy + cam.cy;

  Projection out;
  out.pixels = reshape(concat({u, v}, 0), {2, n});
  out.depths = reshape(z, {1, n});
  out.valid.resize(n);
  const std::vector<double>& zd = out.depths.data();
  for (long i = 0; i < n; ++i) out.valid[i] = zd[i] > kZEps ? 1 : 0;
  return out;
}

RigidFlow rigid_flow(const DepthMap& depth_t, const PinholeCamera& cam_t,
                     const PinholeCamera& cam_t1) {
  if (!cam_t.same_intrinsics(cam_t1))
    throw ContractError("rigid_flow: the two cameras must share intrinsics");
  const long h = depth_t.height(), w = depth_t.width();
  RigidFlow out;
  if (cam_t.same_pose(cam_t1)) {
    // Zero ego-motion: the flow is identically zero and has zero derivative in
    // depth, so a constant is exact.
    out.flow = FlowField(Tensor::zeros({2, h, w}));
    out.valid.assign(h * w, 1);
    return out;
  }
  Tensor world = unproject(depth_t, cam_t);
  Tensor c1 = apply_rigid(world, cam_t1.world_to_cam());
  Tensor x = slice(c1, 0, 0, 1), y = slice(c1, 0, 1, 1), z = slice(c1, 0, 2, 1);
  Tensor z_safe = maximum(z, kZEps);
  Tensor u = x / z_safe * cam_t1.fx + cam_t1.cx;
  Tensor v = y / z_safe * cam_t1.fy + cam_t1.cy;
  Tensor grid = pixel_grid(h, w);
  Tensor gx = slice(grid, 0, 0, 1), gy = slice(grid, 0, 1, 1);
  out.flow = FlowField(concat({u - gx, v - gy}, 0));
  out.valid.resize(h * w);
  const std::vector<double>& zd = z.data();
  for (long i = 0; i < h * w; ++i) out.valid[i] = zd[i] > kZEps ? 1 : 0;
  return out;
}

FlowField compose_flow(const FlowField& rigid, const FlowField& residual) {
  if (rigid.t.shape() != residual.t.shape())
    throw ShapeError("compose_flow: shape mismatch " + shape_str(rigid.t.shape()) + " vs " +
                     shape_str(residual.t.shape()));
  return FlowField(rigid.t + residual.t);
}

Tensor warp_image(const Tensor& source, const FlowField& flow) {
  if (source.rank() != 3) throw ShapeError("warp_image: source must be (C,H,W)");
  Tensor coords = pixel_grid(flow.height(), flow.width()) + flow.t;
  return bilinear_sample(source, coords);
}

Tensor forward_backward_gap(const FlowField& f_fwd, const FlowField& f_bwd) {
  if (f_fwd.t.shape() != f_bwd.t.shape())
    throw ShapeError("forward_backward_gap: shape mismatch");
  Tensor coords = pixel_grid(f_fwd.height(), f_fwd.width()) + f_fwd.t;
  Tensor back = bilinear_sample(f_bwd.t, coords);
  Tensor r = f_fwd.t + back;
  Tensor rx = slice(r, 0, 0, 1), ry = slice(r, 0, 1, 1);
  return sqrt(square(rx) + square(ry));
}

Eigen::Matrix4d interpolate_pose(const Eigen::Matrix4d& a, const Eigen::Matrix4d& b, double t) {
  validate_rigid(a, 1e-6, "interpolate_pose.a");
  validate_rigid(b, 1e-6, "interpolate_pose.b");
  if (a == b) return a;
  Eigen::Quaterniond qa(a.topLeftCorner<3, 3>());
  Eigen::Quaterniond qb(b.topLeftCorner<3, 3>());
  if (qa.dot(qb) < 0.0) qb.coeffs() = -qb.coeffs();
  Eigen::Quaterniond q;
  q.coeffs() = (1.0 - t) * qa.coeffs() + t * qb.coeffs();
  q.normalize();
  Eigen::Matrix4d out = Eigen::Matrix4d::Identity();
  out.topLeftCorner<3, 3>() = q.toRotationMatrix();
  out.topRightCorner<3, 1>() =
      (1.0 - t) * a.topRightCorner<3, 1>() + t * b.topRightCorner<3, 1>();
  return out;
}

void save_rig(const std::string& path, const std::vector<PinholeCamera>& rig) {
  std::ofstream f(path);
  if (!f) throw IoError("save_rig: cannot open " + path);
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  f << "cameras " << rig.size() << "\n";
  for (size_t i = 0; i < rig.size(); ++i) {
    const PinholeCamera& c = rig[i];
    f << "camera " << i << "\n";
    f << "fx " << num(c.fx) << "\nfy " << num(c.fy) << "\ncx " << num(c.cx) << "\ncy "
      << num(c.cy) << "\n";
    f << "width " << c.width << "\nheight " << c.height << "\n";
    f << "cam_to_world";
    for (int r = 0; r < 4; ++r)
      for (int cc = 0; cc < 4; ++cc) f << " " << num(c.cam_to_world(r, cc));
    f << "\n";
  }
  if (!f) throw IoError("save_rig: write failed for " + path);
}

std::vector<PinholeCamera> load_rig(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("load_rig: cannot open " + path);
  std::string key;
  size_t count = 0;
  if (!(f >> key >> count) || key != "cameras") throw IoError("load_rig: bad header in " + path);
  std::vector<PinholeCamera> rig;
  for (size_t i = 0; i < count; ++i) {
    size_t idx;
    double fx, fy, cx, cy;
    long w, h;
    Eigen::Matrix4d m;
    auto expect = [&](const char* want) {
      if (!(f >> key) || key != want) throw IoError(std::string("load_rig: expected ") + want);
    };
    expect("camera");
    f >> idx;
    expect("fx");
    f >> fx;
    expect("fy");
    f >> fy;
    expect("cx");
    f >> cx;
    expect("cy");
    f >> cy;
    expect("width");
    f >> w;
    expect("height");
    f >> h;
    expect("cam_to_world");
    for (int r = 0; r < 4; ++r)
      for (int cc = 0; cc < 4; ++cc) f >> m(r, cc);
    if (!f) throw IoError("load_rig: truncated file " + path);
    rig.emplace_back(fx, fy, cx, cy, w, h, m);
  }
  return rig;
}

}  // namespace sf
