#include "sf/splatter.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace sf {

namespace {

constexpr double kC0 = 0.28209479177387814;  // Y00
constexpr double kC1 = 0.4886025119029199;   // |Y1m|

struct CamConst {
  double fx, fy, cx, cy;
  double W[9];   // world-to-camera rotation, row-major
  double o[3];   // camera center, world
};

CamConst cam_const(const PinholeCamera& cam) {
  CamConst cc;
  cc.fx = cam.fx;
  cc.fy = cam.fy;
  cc.cx = cam.cx;
  cc.cy = cam.cy;
  Eigen::Matrix3d w = cam.rotation().transpose();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) cc.W[3 * i + j] = w(i, j);
  Eigen::Vector3d o = cam.center();
  for (int i = 0; i < 3; ++i) cc.o[i] = o(i);
  return cc;
}

// Everything the backward pass needs about one projected primitive.
struct GaussFwd {
  bool valid = false;
  bool singular = false;
  double q[4], qn[4], qnorm = 1.0;
  double s[3];
  double op = 0.0;
  double xc = 0, yc = 0, zc = 0;
  double R[9];
  double Sig[9];
  double m0[3], m1[3];  // rows of M = J * W
  double cov[3];        // (a, b, c) with dilation
  double inv[3];
  double dir[3];
  double vnorm = 1.0;
  double pre[3];
  double col[3];
  double m2d[2];
};

void project_one(const double* mean, const double* quat, const double* scale, const double* sh,
                 double opacity, const CamConst& cc, const RenderConfig& cfg, GaussFwd& g) {
  g.valid = false;
  g.singular = false;
  for (int i = 0; i < 4; ++i) g.q[i] = quat[i];
  for (int i = 0; i < 3; ++i) g.s[i] = scale[i];
  g.op = opacity;

  const double v[3] = {mean[0] - cc.o[0], mean[1] - cc.o[1], mean[2] - cc.o[2]};
  g.xc = cc.W[0] * v[0] + cc.W[1] * v[1] + cc.W[2] * v[2];
  g.yc = cc.W[3] * v[0] + cc.W[4] * v[1] + cc.W[5] * v[2];
  g.zc = cc.W[6] * v[0] + cc.W[7] * v[1] + cc.W[8] * v[2];
  if (!(g.zc > cfg.near && g.zc < cfg.far)) return;

  g.qnorm = std::sqrt(g.q[0] * g.q[0] + g.q[1] * g.q[1] + g.q[2] * g.q[2] + g.q[3] * g.q[3]);
  if (g.qnorm < 1e-12) return;
  for (int i = 0; i < 4; ++i) g.qn[i] = g.q[i] / g.qnorm;
  const double w = g.qn[0], x = g.qn[1], y = g.qn[2], z = g.qn[3];
  g.R[0] = 1 - 2 * (y * y + z * z);
  g.R[1] = 2 * (x * y - w * z);
  g.R[2] = 2 * (x * z + w * y);
  g.R[3] = 2 * (x * y + w * z);
  g.R[4] = 1 - 2 * (x * x + z * z);
  g.R[5] = 2 * (y * z - w * x);
  g.R[6] = 2 * (x * z - w * y);
  g.R[7] = 2 * (y * z + w * x);
  g.R[8] = 1 - 2 * (x * x + y * y);

  const double s2[3] = {g.s[0] * g.s[0], g.s[1] * g.s[1], g.s[2] * g.s[2]};
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) {
      double acc = 0;
      for (int k = 0; k < 3; ++k) acc += s2[k] * g.R[3 * i + k] * g.R[3 * j + k];
      g.Sig[3 * i + j] = acc;
      g.Sig[3 * j + i] = acc;
    }

  const double iz = 1.0 / g.zc;
  const double j0[3] = {cc.fx * iz, 0.0, -cc.fx * g.xc * iz * iz};
  const double j1[3] = {0.0, cc.fy * iz, -cc.fy * g.yc * iz * iz};
  for (int c = 0; c < 3; ++c) {
    g.m0[c] = j0[0] * cc.W[c] + j0[2] * cc.W[6 + c];
    g.m1[c] = j1[1] * cc.W[3 + c] + j1[2] * cc.W[6 + c];
  }
  auto quad = [&](const double* a, const double* b) {
    double acc = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) acc += a[i] * g.Sig[3 * i + j] * b[j];
    return acc;
  };
  g.cov[0] = quad(g.m0, g.m0) + cfg.dilation;
  g.cov[1] = quad(g.m0, g.m1);
  g.cov[2] = quad(g.m1, g.m1) + cfg.dilation;
  const double det = g.cov[0] * g.cov[2] - g.cov[1] * g.cov[1];
  if (det < 1e-12) {
    g.singular = true;
    return;
  }
  g.inv[0] = g.cov[2] / det;
  g.inv[1] = -g.cov[1] / det;
  g.inv[2] = g.cov[0] / det;

  g.m2d[0] = cc.fx * g.xc * iz + cc.cx;
  g.m2d[1] = cc.fy * g.yc * iz + cc.cy;

  g.vnorm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  for (int i = 0; i < 3; ++i) g.dir[i] = v[i] / g.vnorm;

  for (int ch = 0; ch < 3; ++ch) {
    double c = 0.5 + kC0 * sh[ch];
    if (cfg.sh_degree >= 1)
      c += kC1 * (-g.dir[1] * sh[3 + ch * 3 + 0] + g.dir[2] * sh[3 + ch * 3 + 1] -
                  g.dir[0] * sh[3 + ch * 3 + 2]);
    g.pre[ch] = c;
    g.col[ch] = std::min(1.0, std::max(0.0, c));
  }
  g.valid = true;
}

// Sorted, flattened footprint data for compositing.
struct SortedScene {
  std::vector<int32_t> order;  // input indices, ascending depth
  std::vector<double> m2d, inv, col, op;
  std::vector<int32_t> px0, px1, py0, py1;  // inclusive pixel bounds, x1 < x0 if empty
};

// Footprint bounding box under cov2d, whole image when alpha_cutoff == 0 so
// that the cutoff-free configuration composites every primitive everywhere.
// The radius is the exact reach of the cutoff: alpha * g >= cutoff requires
// d^T cov^-1 d <= 2 ln(alpha/cutoff), i.e. roughly 3.3 sigma at the default
// cutoff. Everything the box drops would have been dropped by the per-pixel
// cutoff test anyway.
void footprint(const double* cov, const double* m2d, double opacity, const RenderConfig& cfg,
               int32_t& x0, int32_t& x1, int32_t& y0, int32_t& y1) {
  if (cfg.alpha_cutoff == 0.0) {
    x0 = 0;
    x1 = static_cast<int32_t>(cfg.width - 1);
    y0 = 0;
    y1 = static_cast<int32_t>(cfg.height - 1);
    return;
  }
  if (!(opacity > cfg.alpha_cutoff)) {  // cannot reach the cutoff anywhere
    x0 = y0 = 0;
    x1 = y1 = -1;
    return;
  }
  const double mid = 0.5 * (cov[0] + cov[2]);
  const double disc = std::sqrt(std::max(0.0, 0.25 * (cov[0] - cov[2]) * (cov[0] - cov[2]) +
                                                  cov[1] * cov[1]));
  const double reach = std::sqrt(2.0 * std::log(opacity / cfg.alpha_cutoff));
  const double r = reach * std::sqrt(std::max(1e-12, mid + disc));
  x0 = static_cast<int32_t>(std::max(0.0, std::ceil(m2d[0] - r)));
  x1 = static_cast<int32_t>(std::min(static_cast<double>(cfg.width - 1), std::floor(m2d[0] + r)));
  y0 = static_cast<int32_t>(std::max(0.0, std::ceil(m2d[1] - r)));
  y1 = static_cast<int32_t>(std::min(static_cast<double>(cfg.height - 1), std::floor(m2d[1] + r)));
}

struct Bins {
  std::vector<int64_t> offset;  // size H*W+1
  std::vector<int32_t> items;   // positions into the sorted arrays, depth order per pixel
};

Bins build_bins(const SortedScene& s, const RenderConfig& cfg) {
  const long hw = cfg.width * cfg.height;
  Bins b;
  b.offset.assign(hw + 1, 0);
  const size_t n = s.order.size();
  std::vector<int64_t> counts(hw, 0);
  for (size_t i = 0; i < n; ++i) {
    if (s.px1[i] < s.px0[i] || s.py1[i] < s.py0[i]) continue;
    for (int32_t y = s.py0[i]; y <= s.py1[i]; ++y)
      for (int32_t x = s.px0[i]; x <= s.px1[i]; ++x) ++counts[y * cfg.width + x];
  }
  b.offset[0] = 0;
  for (long p = 0; p < hw; ++p) b.offset[p + 1] = b.offset[p] + counts[p];
  b.items.resize(b.offset[hw]);
  std::vector<int64_t> cursor(b.offset.begin(), b.offset.end() - 1);
  for (size_t i = 0; i < n; ++i) {
    if (s.px1[i] < s.px0[i] || s.py1[i] < s.py0[i]) continue;
    for (int32_t y = s.py0[i]; y <= s.py1[i]; ++y)
      for (int32_t x = s.px0[i]; x <= s.px1[i]; ++x)
        b.items[cursor[y * cfg.width + x]++] = static_cast<int32_t>(i);
  }
  return b;
}

inline double gauss_weight(const double* inv, double dx, double dy) {
  double sigma = 0.5 * (inv[0] * dx * dx + inv[2] * dy * dy) + inv[1] * dx * dy;
  if (sigma < 0.0) sigma = 0.0;
  return std::exp(-sigma);
}

void composite_forward(const SortedScene& s, const Bins& bins, const RenderConfig& cfg,
                       double* image, double* alpha, RenderStats* stats) {
  const long hw = cfg.width * cfg.height;
  long blended = 0;
  for (long p = 0; p < hw; ++p) {
    const double px = static_cast<double>(p % cfg.width);
    const double py = static_cast<double>(p / cfg.width);
    double T = 1.0;
    double c0 = 0, c1 = 0, c2 = 0;
    for (int64_t it = bins.offset[p]; it < bins.offset[p + 1]; ++it) {
      const int32_t i = bins.items[it];
      const double g = gauss_weight(&s.inv[3 * i], px - s.m2d[2 * i], py - s.m2d[2 * i + 1]);
      const double a = s.op[i] * g;
      if (cfg.alpha_cutoff > 0.0 && a < cfg.alpha_cutoff) continue;
      const double w = a * T;
      c0 += w * s.col[3 * i];
      c1 += w * s.col[3 * i + 1];
      c2 += w * s.col[3 * i + 2];
      T *= 1.0 - a;
      ++blended;
      if (T < cfg.transmittance_floor) break;
    }
    image[p] = c0 + T * cfg.background[0];
    image[hw + p] = c1 + T * cfg.background[1];
    image[2 * hw + p] = c2 + T * cfg.background[2];
    alpha[p] = 1.0 - T;
  }
  if (stats) stats->mean_blended = hw > 0 ? static_cast<double>(blended) / hw : 0.0;
}

// Per-gaussian gradients accumulated by the compositing backward.
struct CompositeGrads {
  std::vector<double> m2d, cov, col, op;  // sorted-order layout
  explicit CompositeGrads(size_t n) : m2d(2 * n, 0.0), cov(3 * n, 0.0), col(3 * n, 0.0), op(n, 0.0) {}
};

void composite_backward(const SortedScene& s, const Bins& bins, const RenderConfig& cfg,
                        const double* d_image, const double* d_alpha, CompositeGrads& out) {
  const long hw = cfg.width * cfg.height;
  struct Hit {
    int32_t i;
    double g, a, T;
  };
  std::vector<Hit> stack;
  for (long p = 0; p < hw; ++p) {
    const double gI[3] = {d_image ? d_image[p] : 0.0, d_image ? d_image[hw + p] : 0.0,
                          d_image ? d_image[2 * hw + p] : 0.0};
    const double gA = d_alpha ? d_alpha[p] : 0.0;
    if (gI[0] == 0.0 && gI[1] == 0.0 && gI[2] == 0.0 && gA == 0.0) continue;
    const double px = static_cast<double>(p % cfg.width);
    const double py = static_cast<double>(p / cfg.width);

    // Re-walk the forward pass to recover the composited prefix.
    stack.clear();
    double T = 1.0;
    for (int64_t it = bins.offset[p]; it < bins.offset[p + 1]; ++it) {
      const int32_t i = bins.items[it];
      const double g = gauss_weight(&s.inv[3 * i], px - s.m2d[2 * i], py - s.m2d[2 * i + 1]);
      const double a = s.op[i] * g;
      if (cfg.alpha_cutoff > 0.0 && a < cfg.alpha_cutoff) continue;
      stack.push_back({i, g, a, T});
      T *= 1.0 - a;
      if (T < cfg.transmittance_floor) break;
    }

    // Reverse sweep. rest = color composited behind the current hit assuming
    // unit transmittance there; rest_alpha = product of (1-a) behind it.
    double rest[3] = {cfg.background[0], cfg.background[1], cfg.background[2]};
    double rest_alpha = 1.0;
    for (size_t k = stack.size(); k-- > 0;) {
      const Hit& h = stack[k];
      const int32_t i = h.i;
      double da = 0.0;
      for (int ch = 0; ch < 3; ++ch) {
        out.col[3 * i + ch] += gI[ch] * h.a * h.T;
        da += gI[ch] * h.T * (s.col[3 * i + ch] - rest[ch]);
      }
      da += gA * h.T * rest_alpha;

      out.op[i] += da * h.g;
      const double dg = da * s.op[i];
      const double dx = px - s.m2d[2 * i], dy = py - s.m2d[2 * i + 1];
      const double ux = s.inv[3 * i] * dx + s.inv[3 * i + 1] * dy;
      const double uy = s.inv[3 * i + 1] * dx + s.inv[3 * i + 2] * dy;
      const double gdg = dg * h.g;
      out.m2d[2 * i] += gdg * ux;
      out.m2d[2 * i + 1] += gdg * uy;
      out.cov[3 * i] += gdg * 0.5 * ux * ux;
      out.cov[3 * i + 1] += gdg * ux * uy;
      out.cov[3 * i + 2] += gdg * 0.5 * uy * uy;

      for (int ch = 0; ch < 3; ++ch) rest[ch] = h.a * s.col[3 * i + ch] + (1.0 - h.a) * rest[ch];
      rest_alpha *= 1.0 - h.a;
    }
  }
}

// Chains footprint-space gradients back to the cloud attribute tensors.
void projection_backward(const GaussFwd& g, const CamConst& cc, const RenderConfig& cfg,
                         const double* sh, const double* d_m2d, const double* d_cov,
                         const double* d_col, double d_op, double* d_mean, double* d_q,
                         double* d_s, double* d_opacity, double* d_sh) {
  *d_opacity += d_op;

  // Color: clamp gate, SH basis, view direction.
  double d_dir[3] = {0, 0, 0};
  for (int ch = 0; ch < 3; ++ch) {
    if (!(g.pre[ch] > 0.0 && g.pre[ch] < 1.0)) continue;
    const double dpre = d_col[ch];
    if (dpre == 0.0) continue;
    d_sh[ch] += dpre * kC0;
    if (cfg.sh_degree >= 1) {
      d_sh[3 + ch * 3 + 0] += dpre * kC1 * (-g.dir[1]);
      d_sh[3 + ch * 3 + 1] += dpre * kC1 * g.dir[2];
      d_sh[3 + ch * 3 + 2] += dpre * kC1 * (-g.dir[0]);
      d_dir[0] += dpre * kC1 * (-sh[3 + ch * 3 + 2]);
      d_dir[1] += dpre * kC1 * (-sh[3 + ch * 3 + 0]);
      d_dir[2] += dpre * kC1 * sh[3 + ch * 3 + 1];
    }
  }
  // dir = v / |v|
  const double dot = g.dir[0] * d_dir[0] + g.dir[1] * d_dir[1] + g.dir[2] * d_dir[2];
  for (int i = 0; i < 3; ++i) d_mean[i] += (d_dir[i] - g.dir[i] * dot) / g.vnorm;

  double dxc = 0, dyc = 0, dzc = 0;
  const double iz = 1.0 / g.zc;

  // mean2d = (fx*xc/zc + cx, fy*yc/zc + cy)
  dxc += d_m2d[0] * cc.fx * iz;
  dzc -= d_m2d[0] * cc.fx * g.xc * iz * iz;
  dyc += d_m2d[1] * cc.fy * iz;
  dzc -= d_m2d[1] * cc.fy * g.yc * iz * iz;

  // cov2d quadratic forms: a = m0' Sig m0, b = m0' Sig m1, c = m1' Sig m1.
  const double da = d_cov[0], db = d_cov[1], dc = d_cov[2];
  double sig_m0[3], sig_m1[3];
  for (int i = 0; i < 3; ++i) {
    sig_m0[i] = g.Sig[3 * i] * g.m0[0] + g.Sig[3 * i + 1] * g.m0[1] + g.Sig[3 * i + 2] * g.m0[2];
    sig_m1[i] = g.Sig[3 * i] * g.m1[0] + g.Sig[3 * i + 1] * g.m1[1] + g.Sig[3 * i + 2] * g.m1[2];
  }
  double dm0[3], dm1[3];
  for (int i = 0; i < 3; ++i) {
    dm0[i] = 2.0 * da * sig_m0[i] + db * sig_m1[i];
    dm1[i] = 2.0 * dc * sig_m1[i] + db * sig_m0[i];
  }
  // G3 = dL/dSig as a full matrix
  double G3[9];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      G3[3 * i + j] = da * g.m0[i] * g.m0[j] + db * g.m0[i] * g.m1[j] + dc * g.m1[i] * g.m1[j];

  // M = J W, J depends on (xc, yc, zc)
  double dJ00 = 0, dJ02 = 0, dJ11 = 0, dJ12 = 0;
  for (int c = 0; c < 3; ++c) {
    dJ00 += dm0[c] * cc.W[c];
    dJ02 += dm0[c] * cc.W[6 + c];
    dJ11 += dm1[c] * cc.W[3 + c];
    dJ12 += dm1[c] * cc.W[6 + c];
  }
  const double iz2 = iz * iz;
  dxc += dJ02 * (-cc.fx * iz2);
  dyc += dJ12 * (-cc.fy * iz2);
  dzc += dJ00 * (-cc.fx * iz2) + dJ11 * (-cc.fy * iz2) + dJ02 * (2.0 * cc.fx * g.xc * iz2 * iz) +
         dJ12 * (2.0 * cc.fy * g.yc * iz2 * iz);

  // Sig = R diag(s^2) R': scales and rotation.
  const double s2[3] = {g.s[0] * g.s[0], g.s[1] * g.s[1], g.s[2] * g.s[2]};
  for (int k = 0; k < 3; ++k) {
    // column k of R
    const double rk[3] = {g.R[k], g.R[3 + k], g.R[6 + k]};
    double quad = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) quad += rk[i] * G3[3 * i + j] * rk[j];
    d_s[k] += 2.0 * g.s[k] * quad;
  }
  // dR = (G3 + G3') R diag(s^2)
  double dR[9];
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) {
      double acc = 0;
      for (int j = 0; j < 3; ++j) acc += (G3[3 * i + j] + G3[3 * j + i]) * g.R[3 * j + k];
      dR[3 * i + k] = acc * s2[k];
    }

  // R(qn) partials, qn = (w,x,y,z)
  const double w = g.qn[0], x = g.qn[1], y = g.qn[2], z = g.qn[3];
  double dqn[4];
  dqn[0] = 2.0 * (-z * dR[1] + y * dR[2] + z * dR[3] - x * dR[5] - y * dR[6] + x * dR[7]);
  dqn[1] = 2.0 * (y * dR[1] + z * dR[2] + y * dR[3] - 2.0 * x * dR[4] - w * dR[5] + z * dR[6] +
                  w * dR[7] - 2.0 * x * dR[8]);
  dqn[2] = 2.0 * (-2.0 * y * dR[0] + x * dR[1] + w * dR[2] + x * dR[3] + z * dR[5] - w * dR[6] +
                  z * dR[7] - 2.0 * y * dR[8]);
  dqn[3] = 2.0 * (-2.0 * z * dR[0] - w * dR[1] + x * dR[2] + w * dR[3] - 2.0 * z * dR[4] +
                  y * dR[5] + x * dR[6] + y * dR[7]);
  // through normalization
  const double qd = g.qn[0] * dqn[0] + g.qn[1] * dqn[1] + g.qn[2] * dqn[2] + g.qn[3] * dqn[3];
  for (int i = 0; i < 4; ++i) d_q[i] += (dqn[i] - g.qn[i] * qd) / g.qnorm;

  // Xc = W (mu - o)
  d_mean[0] += cc.W[0] * dxc + cc.W[3] * dyc + cc.W[6] * dzc;
  d_mean[1] += cc.W[1] * dxc + cc.W[4] * dyc + cc.W[7] * dzc;
  d_mean[2] += cc.W[2] * dxc + cc.W[5] * dyc + cc.W[8] * dzc;
}

struct RenderSaved {
  RenderConfig cfg;
  CamConst cc;
  std::vector<GaussFwd> fwd;  // per input primitive
  SortedScene scene;
  Bins bins;
  Tensor means, rotations, scales, opacities, sh;  // parents (leaf handles)
};

void render_backward(const RenderSaved& rs, const double* d_image, const double* d_alpha) {
  CompositeGrads cg(rs.scene.order.size());
  composite_backward(rs.scene, rs.bins, rs.cfg, d_image, d_alpha, cg);

  const bool need_means = rs.means.impl->requires_grad;
  const bool need_rot = rs.rotations.impl->requires_grad;
  const bool need_scale = rs.scales.impl->requires_grad;
  const bool need_op = rs.opacities.impl->requires_grad;
  const bool need_sh = rs.sh.impl->requires_grad;
  const long k = rs.sh.impl->shape[1];

  double* g_means = need_means ? ensure_grad(*rs.means.impl).data() : nullptr;
  double* g_rot = need_rot ? ensure_grad(*rs.rotations.impl).data() : nullptr;
  double* g_scale = need_scale ? ensure_grad(*rs.scales.impl).data() : nullptr;
  double* g_op = need_op ? ensure_grad(*rs.opacities.impl).data() : nullptr;
  double* g_sh = need_sh ? ensure_grad(*rs.sh.impl).data() : nullptr;

  std::vector<double> d_mean(3), d_q(4), d_s(3), d_sh(k);
  const double* sh_data = rs.sh.impl->data.data();
  for (size_t pos = 0; pos < rs.scene.order.size(); ++pos) {
    const int32_t idx = rs.scene.order[pos];
    const GaussFwd& gf = rs.fwd[idx];
    std::fill(d_mean.begin(), d_mean.end(), 0.0);
    std::fill(d_q.begin(), d_q.end(), 0.0);
    std::fill(d_s.begin(), d_s.end(), 0.0);
    std::fill(d_sh.begin(), d_sh.end(), 0.0);
    double d_opacity = 0.0;
    projection_backward(gf, rs.cc, rs.cfg, sh_data + idx * k, &cg.m2d[2 * pos], &cg.cov[3 * pos],
                        &cg.col[3 * pos], cg.op[pos], d_mean.data(), d_q.data(), d_s.data(),
                        &d_opacity, d_sh.data());
    if (g_means)
      for (int i = 0; i < 3; ++i) g_means[idx * 3 + i] += d_mean[i];
    if (g_rot)
      for (int i = 0; i < 4; ++i) g_rot[idx * 4 + i] += d_q[i];
    if (g_scale)
      for (int i = 0; i < 3; ++i) g_scale[idx * 3 + i] += d_s[i];
    if (g_op) g_op[idx] += d_opacity;
    if (g_sh)
      for (long i = 0; i < k; ++i) g_sh[idx * k + i] += d_sh[i];
  }
}

SortedScene sort_and_flatten(const std::vector<GaussFwd>& fwd, const RenderConfig& cfg) {
  SortedScene s;
  for (size_t i = 0; i < fwd.size(); ++i)
    if (fwd[i].valid) s.order.push_back(static_cast<int32_t>(i));
  std::stable_sort(s.order.begin(), s.order.end(),
                   [&](int32_t a, int32_t b) { return fwd[a].zc < fwd[b].zc; });
  const size_t n = s.order.size();
  s.m2d.resize(2 * n);
  s.inv.resize(3 * n);
  s.col.resize(3 * n);
  s.op.resize(n);
  s.px0.resize(n);
  s.px1.resize(n);
  s.py0.resize(n);
  s.py1.resize(n);
  for (size_t p = 0; p < n; ++p) {
    const GaussFwd& g = fwd[s.order[p]];
    s.m2d[2 * p] = g.m2d[0];
    s.m2d[2 * p + 1] = g.m2d[1];
    for (int i = 0; i < 3; ++i) {
      s.inv[3 * p + i] = g.inv[i];
      s.col[3 * p + i] = g.col[i];
    }
    s.op[p] = g.op;
    footprint(g.cov, g.m2d, g.op, cfg, s.px0[p], s.px1[p], s.py0[p], s.py1[p]);
  }
  return s;
}

std::vector<GaussFwd> project_all(const GaussianCloud& cloud, const PinholeCamera& cam,
                                  const RenderConfig& cfg, RenderStats* stats) {
  const long n = cloud.count();
  const long k = sh_coeff_count(cfg.sh_degree);
  if (cloud.sh.size(1) < k)
    throw ShapeError("render: cloud SH degree lower than the render config requests");
  const CamConst cc = cam_const(cam);
  std::vector<GaussFwd> fwd(n);
  const double* means = cloud.means.data().data();
  const double* rots = cloud.rotations.data().data();
  const double* scales = cloud.scales.data().data();
  const double* ops = cloud.opacities.data().data();
  const double* sh = cloud.sh.data().data();
  const long kc = cloud.sh.size(1);
  long culled = 0, singular = 0;
  for (long i = 0; i < n; ++i) {
    project_one(means + 3 * i, rots + 4 * i, scales + 3 * i, sh + kc * i, ops[i], cc, cfg, fwd[i]);
    if (fwd[i].singular)
      ++singular;
    else if (!fwd[i].valid)
      ++culled;
  }
  if (stats) {
    stats->total = n;
    stats->culled = culled;
    stats->skipped_singular = singular;
  }
  return fwd;
}

}  // namespace

void RenderConfig::validate() const {
  if (width <= 0 || height <= 0) throw ContractError("RenderConfig: empty image");
  if (!(near > 0.0 && near < far)) throw ContractError("RenderConfig: need 0 < near < far");
  if (alpha_cutoff < 0.0 || alpha_cutoff >= 1.0 || transmittance_floor < 0.0 ||
      transmittance_floor >= 1.0)
    throw ContractError("RenderConfig: thresholds must lie in [0,1)");
  if (sh_degree != 0 && sh_degree != 1) throw ContractError("RenderConfig: sh degree 0 or 1");
}

std::vector<ProjectedGaussian> project_gaussians(const GaussianCloud& cloud,
                                                 const PinholeCamera& cam,
                                                 const RenderConfig& cfg, RenderStats* stats) {
  cfg.validate();
  RenderStats local;
  std::vector<GaussFwd> fwd = project_all(cloud, cam, cfg, &local);
  if (stats) *stats = local;
  std::vector<ProjectedGaussian> out(fwd.size());
  for (size_t i = 0; i < fwd.size(); ++i) {
    const GaussFwd& g = fwd[i];
    ProjectedGaussian& p = out[i];
    p.valid = g.valid;
    p.depth = g.zc;
    if (!g.valid) continue;
    p.mean2d[0] = g.m2d[0];
    p.mean2d[1] = g.m2d[1];
    for (int j = 0; j < 3; ++j) {
      p.cov2d[j] = g.cov[j];
      p.color[j] = g.col[j];
    }
    p.opacity = g.op;
  }
  return out;
}

namespace {

// Shared path from a ProjectedGaussian list (external callers) into the
// compositing structures.
SortedScene scene_from_projected(const std::vector<ProjectedGaussian>& projected,
                                 const RenderConfig& cfg, long* singular) {
  std::vector<GaussFwd> fwd(projected.size());
  long sing = 0;
  for (size_t i = 0; i < projected.size(); ++i) {
    const ProjectedGaussian& p = projected[i];
    GaussFwd& g = fwd[i];
    g.valid = false;
    if (!p.valid) continue;
    const double det = p.cov2d[0] * p.cov2d[2] - p.cov2d[1] * p.cov2d[1];
    if (det < 1e-12) {
      ++sing;
      continue;
    }
    g.valid = true;
    g.zc = p.depth;
    g.m2d[0] = p.mean2d[0];
    g.m2d[1] = p.mean2d[1];
    g.cov[0] = p.cov2d[0];
    g.cov[1] = p.cov2d[1];
    g.cov[2] = p.cov2d[2];
    g.inv[0] = p.cov2d[2] / det;
    g.inv[1] = -p.cov2d[1] / det;
    g.inv[2] = p.cov2d[0] / det;
    for (int j = 0; j < 3; ++j) g.col[j] = p.color[j];
    g.op = p.opacity;
  }
  if (singular) *singular = sing;
  return sort_and_flatten(fwd, cfg);
}

}  // namespace

RasterImage rasterize(const std::vector<ProjectedGaussian>& projected, const RenderConfig& cfg) {
  cfg.validate();
  RasterImage out;
  const long hw = cfg.width * cfg.height;
  out.image.assign(3 * hw, 0.0);
  out.alpha.assign(hw, 0.0);
  long singular = 0;
  SortedScene scene = scene_from_projected(projected, cfg, &singular);
  Bins bins = build_bins(scene, cfg);
  out.stats.total = static_cast<long>(projected.size());
  out.stats.skipped_singular = singular;
  composite_forward(scene, bins, cfg, out.image.data(), out.alpha.data(), &out.stats);
  return out;
}

std::vector<double> rasterize_oracle(const std::vector<ProjectedGaussian>& projected,
                                     const RenderConfig& cfg) {
  cfg.validate();
  const long hw = cfg.width * cfg.height;
  std::vector<double> image(3 * hw, 0.0);

  std::vector<int32_t> order;
  for (size_t i = 0; i < projected.size(); ++i)
    if (projected[i].valid) order.push_back(static_cast<int32_t>(i));
  std::stable_sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
    return projected[a].depth < projected[b].depth;
  });

  for (long p = 0; p < hw; ++p) {
    const double px = static_cast<double>(p % cfg.width);
    const double py = static_cast<double>(p / cfg.width);
    double T = 1.0;
    double acc[3] = {0, 0, 0};
    for (int32_t i : order) {
      const ProjectedGaussian& g = projected[i];
      const double det = g.cov2d[0] * g.cov2d[2] - g.cov2d[1] * g.cov2d[1];
      if (det < 1e-12) continue;
      const double inv[3] = {g.cov2d[2] / det, -g.cov2d[1] / det, g.cov2d[0] / det};
      const double gw = gauss_weight(inv, px - g.mean2d[0], py - g.mean2d[1]);
      const double a = g.opacity * gw;
      for (int ch = 0; ch < 3; ++ch) acc[ch] += a * T * g.color[ch];
      T *= 1.0 - a;
    }
    for (int ch = 0; ch < 3; ++ch) image[ch * hw + p] = acc[ch] + T * cfg.background[ch];
  }
  return image;
}

RenderOutput render(const GaussianCloud& cloud, const PinholeCamera& cam,
                    const RenderConfig& cfg) {
  cfg.validate();
  auto saved = std::make_shared<RenderSaved>();
  saved->cfg = cfg;
  saved->cc = cam_const(cam);
  RenderStats stats;
  saved->fwd = project_all(cloud, cam, cfg, &stats);
  saved->scene = sort_and_flatten(saved->fwd, cfg);
  saved->bins = build_bins(saved->scene, cfg);
  saved->means = cloud.means;
  saved->rotations = cloud.rotations;
  saved->scales = cloud.scales;
  saved->opacities = cloud.opacities;
  saved->sh = cloud.sh;

  const long hw = cfg.width * cfg.height;
  std::vector<double> image(3 * hw, 0.0), alpha(hw, 0.0);
  composite_forward(saved->scene, saved->bins, cfg, image.data(), alpha.data(), &stats);

  RenderOutput out;
  out.stats = stats;
  std::vector<Tensor> parents = {cloud.means, cloud.rotations, cloud.scales, cloud.opacities,
                                 cloud.sh};
  out.image = make_op(
      {3, cfg.height, cfg.width}, std::move(image), parents,
      [saved](TensorImpl& self) { render_backward(*saved, self.grad.data(), nullptr); },
      "render_image");
  out.alpha = make_op(
      {1, cfg.height, cfg.width}, std::move(alpha), parents,
      [saved](TensorImpl& self) { render_backward(*saved, nullptr, self.grad.data()); },
      "render_alpha");
  return out;
}

}  // namespace sf
