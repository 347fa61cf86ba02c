#include "sf/gaussians.hpp"

#include <cmath>

namespace sf {

long sh_coeff_count(int degree) {
  if (degree != 0 && degree != 1) throw ContractError("sh degree must be 0 or 1");
  return 3 * (degree + 1) * (degree + 1);
}

void GaussianCloud::validate() const {
  const long n = count();
  if (rotations.size(0) != n || scales.size(0) != n || opacities.size(0) != n ||
      sh.size(0) != n)
    throw ShapeError("GaussianCloud: attribute row counts disagree");
  if (means.size(1) != 3 || rotations.size(1) != 4 || scales.size(1) != 3 ||
      opacities.size(1) != 1 || sh.size(1) != sh_coeff_count(sh_degree))
    throw ShapeError("GaussianCloud: attribute widths disagree");
  const std::vector<double>& q = rotations.data();
  for (long i = 0; i < n; ++i) {
    double nrm = std::sqrt(q[4 * i] * q[4 * i] + q[4 * i + 1] * q[4 * i + 1] +
                           q[4 * i + 2] * q[4 * i + 2] + q[4 * i + 3] * q[4 * i + 3]);
    if (std::abs(nrm - 1.0) > 1e-6)
      throw DomainError("GaussianCloud: non-unit quaternion at row " + std::to_string(i));
  }
  for (double s : scales.data())
    if (!(s > 0.0)) throw DomainError("GaussianCloud: non-positive scale");
  for (double o : opacities.data())
    if (!(o > 0.0 && o < 1.0)) throw DomainError("GaussianCloud: opacity outside (0,1)");
}

Tensor covariance(const Tensor& rotation, const Tensor& scale) {
  if (rotation.numel() != 4 || scale.numel() != 3)
    throw ShapeError("covariance: expected quaternion (4) and scale (3)");
  const std::vector<double>& q = rotation.data();
  Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
  if (quat.norm() < 1e-12) throw DomainError("covariance: degenerate quaternion");
  quat.normalize();
  Eigen::Matrix3d r = quat.toRotationMatrix();
  const std::vector<double>& s = scale.data();
  Eigen::Matrix3d sigma =
      r * Eigen::Vector3d(s[0] * s[0], s[1] * s[1], s[2] * s[2]).asDiagonal() * r.transpose();
  std::vector<double> out(9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out[3 * i + j] = sigma(i, j);
  return Tensor::from_data({3, 3}, std::move(out));
}

namespace {

// (C,H,W) -> (N,C) with N = H*W in row-major pixel order.
Tensor maps_to_rows(const Tensor& maps) {
  const long c = maps.size(0), n = maps.size(1) * maps.size(2);
  return transpose(reshape(maps, {c, n}), {1, 0});
}

Tensor normalize_rows(const Tensor& rows) {
  Tensor n2 = reduce_sum(square(rows), {1});  // (N)
  const std::vector<double>& nd = n2.data();
  for (size_t i = 0; i < nd.size(); ++i)
    if (nd[i] < 1e-16)
      throw DomainError("normalize_rows: degenerate row " + std::to_string(i));
  Tensor norm = reshape(sqrt(n2), {rows.size(0), 1});
  return rows / norm;
}

}  // namespace

GaussianCloud pixel_aligned_cloud(const DepthMap& depth, const RawAttributeMaps& raw,
                                  const PinholeCamera& cam, const CloudParams& params,
                                  int camera_index) {
  const long h = depth.height(), w = depth.width();
  const long k = sh_coeff_count(params.sh_degree);
  if (raw.rotation.shape() != Shape{4, h, w} || raw.scale.shape() != Shape{3, h, w} ||
      raw.opacity.shape() != Shape{1, h, w} || raw.sh.shape() != Shape{k, h, w})
    throw ShapeError("pixel_aligned_cloud: raw attribute maps have wrong shapes");

  GaussianCloud cloud;
  cloud.sh_degree = params.sh_degree;
  cloud.means = maps_to_rows(unproject(depth, cam));
  cloud.rotations = normalize_rows(maps_to_rows(raw.rotation));
  cloud.scales = clamp(exp(maps_to_rows(raw.scale)), params.s_min, params.s_max);
  cloud.opacities = sigmoid(maps_to_rows(raw.opacity));
  cloud.sh = maps_to_rows(raw.sh);
  cloud.pixel_blocks.push_back({camera_index, h, w});
  return cloud;
}

GaussianCloud to_world(const GaussianCloud& cloud, const Eigen::Matrix4d& transform) {
  validate_rigid(transform, 1e-6, "to_world");
  const Eigen::Matrix3d r = transform.topLeftCorner<3, 3>();
  const Eigen::Vector3d t = transform.topRightCorner<3, 1>();

  std::vector<double> rt(9), tv(3);
  for (int i = 0; i < 3; ++i) {
    tv[i] = t(i);
    for (int j = 0; j < 3; ++j) rt[3 * i + j] = r(j, i);  // R^T, row-major
  }
  GaussianCloud out = cloud;
  out.means = matmul(cloud.means, Tensor::from_data({3, 3}, rt)) +
              reshape(Tensor::from_data({3}, tv), {1, 3});

  // Left-multiply every quaternion by the transform's rotation.
  Eigen::Quaterniond tq(r);
  const double w1 = tq.w(), x1 = tq.x(), y1 = tq.y(), z1 = tq.z();
  Tensor w2 = slice(cloud.rotations, 1, 0, 1);
  Tensor x2 = slice(cloud.rotations, 1, 1, 1);
  Tensor y2 = slice(cloud.rotations, 1, 2, 1);
  Tensor z2 = slice(cloud.rotations, 1, 3, 1);
  Tensor qw = w2 * w1 - x2 * x1 - y2 * y1 - z2 * z1;
  Tensor qx = x2 * w1 + w2 * x1 + z2 * y1 - y2 * z1;
  Tensor qy = y2 * w1 - z2 * x1 + w2 * y1 + x2 * z1;
  Tensor qz = z2 * w1 + y2 * x1 - x2 * y1 + w2 * z1;
  out.rotations = concat({qw, qx, qy, qz}, 1);
  return out;
}

GaussianCloud fuse(const std::vector<GaussianCloud>& clouds) {
  if (clouds.empty()) throw ContractError("fuse: empty cloud list");
  GaussianCloud out;
  out.sh_degree = clouds[0].sh_degree;
  std::vector<Tensor> means, rots, scales, opac, sh;
  bool blocks_ok = true;
  for (const GaussianCloud& c : clouds) {
    if (c.sh_degree != out.sh_degree) throw ContractError("fuse: mixed SH degrees");
    means.push_back(c.means);
    rots.push_back(c.rotations);
    scales.push_back(c.scales);
    opac.push_back(c.opacities);
    sh.push_back(c.sh);
    if (c.pixel_blocks.empty()) blocks_ok = false;
  }
  out.means = concat(means, 0);
  out.rotations = concat(rots, 0);
  out.scales = concat(scales, 0);
  out.opacities = concat(opac, 0);
  out.sh = concat(sh, 0);
  if (blocks_ok)
    for (const GaussianCloud& c : clouds)
      out.pixel_blocks.insert(out.pixel_blocks.end(), c.pixel_blocks.begin(),
                              c.pixel_blocks.end());
  return out;
}

GaussianCloud displace_means(const GaussianCloud& cloud, const std::vector<FlowField>& flow_total,
                             const std::vector<DepthMap>& depth_t1,
                             const std::vector<PinholeCamera>& cams_t1, double alpha) {
  if (cloud.pixel_blocks.empty())
    throw ContractError("displace_means: cloud has no pixel-index record");
  if (alpha < 0.0 || alpha > 1.0) throw ContractError("displace_means: alpha outside [0,1]");
  long rows = 0;
  for (const auto& b : cloud.pixel_blocks) rows += b.height * b.width;
  if (rows != cloud.count())
    throw ContractError("displace_means: pixel-index record does not cover the cloud");

  std::vector<Tensor> new_means;
  long row = 0;
  for (const auto& b : cloud.pixel_blocks) {
    const long n = b.height * b.width;
    if (b.camera < 0 || b.camera >= static_cast<int>(cams_t1.size()))
      throw ContractError("displace_means: camera index out of range");
    const FlowField& flow = flow_total[b.camera];
    const DepthMap& depth = depth_t1[b.camera];
    const PinholeCamera& cam = cams_t1[b.camera];
    if (flow.height() != b.height || flow.width() != b.width ||
        depth.height() != b.height || depth.width() != b.width)
      throw ShapeError("displace_means: flow/depth resolution mismatch");

    Tensor mu = slice(cloud.means, 0, row, n);  // (n,3)

    Tensor target_px = pixel_grid(b.height, b.width) + flow.t;  // (2,H,W)
    Tensor d = bilinear_sample(depth.t, target_px);             // (1,H,W)
    Tensor px = slice(target_px, 0, 0, 1), py = slice(target_px, 0, 1, 1);
    Tensor rx = (px - cam.cx) / cam.fx;
    Tensor ry = (py - cam.cy) / cam.fy;
    Tensor cam_pts = concat({rx * d, ry * d, d}, 0);
    Tensor world = apply_rigid(cam_pts, cam.cam_to_world);      // (3,H,W)
    Tensor target = transpose(reshape(world, {3, n}), {1, 0});  // (n,3)

    new_means.push_back(mu + (target - mu) * alpha);
    row += n;
  }

  GaussianCloud out = cloud;
  out.means = new_means.size() == 1 ? new_means[0] : concat(new_means, 0);
  return out;
}

}  // namespace sf
