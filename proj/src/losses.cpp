#include "sf/losses.hpp"

#include <cmath>
#include <limits>

namespace sf {

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
constexpr long kWin = 11;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

// 11x11 Gaussian window, sigma 1.5, normalized to unit sum.
const Tensor& ssim_window() {
  static const Tensor win = [] {
    std::vector<double> k(kWin * kWin);
    double sum = 0.0;
    for (long y = 0; y < kWin; ++y)
      for (long x = 0; x < kWin; ++x) {
        const double dy = static_cast<double>(y) - (kWin - 1) / 2.0;
        const double dx = static_cast<double>(x) - (kWin - 1) / 2.0;
        k[y * kWin + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
        sum += k[y * kWin + x];
      }
    for (double& v : k) v /= sum;
    return Tensor::from_data({1, 1, kWin, kWin}, std::move(k));
  }();
  return win;
}

Tensor blur_valid(const Tensor& single_channel) {
  return conv2d(single_channel, ssim_window(), 1, 0);
}

// Per-channel SSIM map at valid window positions, (1, H-10, W-10).
Tensor ssim_channel(const Tensor& x, const Tensor& y) {
  Tensor mx = blur_valid(x), my = blur_valid(y);
  Tensor mx2 = square(mx), my2 = square(my), mxy = mx * my;
  Tensor sx = blur_valid(square(x)) - mx2;
  Tensor sy = blur_valid(square(y)) - my2;
  Tensor sxy = blur_valid(x * y) - mxy;
  Tensor num = (2.0 * mxy + kC1) * (2.0 * sxy + kC2);
  Tensor den = (mx2 + my2 + kC1) * (sx + sy + kC2);
  return num / den;
}

// Replicate padding by p pixels through the clamping sampler.
Tensor pad_replicate(const Tensor& image, long p) {
  const long h = image.size(1), w = image.size(2);
  std::vector<double> g(2 * (h + 2 * p) * (w + 2 * p));
  const long hw = (h + 2 * p) * (w + 2 * p);
  long i = 0;
  for (long y = -p; y < h + p; ++y)
    for (long x = -p; x < w + p; ++x, ++i) {
      g[i] = static_cast<double>(x);
      g[hw + i] = static_cast<double>(y);
    }
  return bilinear_sample(image, Tensor::from_data({2, h + 2 * p, w + 2 * p}, std::move(g)));
}

}  // namespace

Tensor l1(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "l1");
  return reduce_mean(abs(a - b));
}

Tensor l2(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "l2");
  return reduce_mean(square(a - b));
}

Tensor ssim(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "ssim");
  if (a.rank() != 3) throw ShapeError("ssim: expected (C,H,W)");
  if (a.size(1) < kWin || a.size(2) < kWin)
    throw ContractError("ssim: image smaller than the 11x11 window");
  std::vector<Tensor> maps;
  for (long c = 0; c < a.size(0); ++c)
    maps.push_back(ssim_channel(slice(a, 0, c, 1), slice(b, 0, c, 1)));
  return reduce_mean(concat(maps, 0));
}

Tensor ssim_map(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "ssim_map");
  const long p = (kWin - 1) / 2;
  std::vector<Tensor> maps;
  for (long c = 0; c < a.size(0); ++c)
    maps.push_back(ssim_channel(pad_replicate(slice(a, 0, c, 1), p),
                                pad_replicate(slice(b, 0, c, 1), p)));
  return reshape(reduce_mean(concat(maps, 0), {0}), {1, a.size(1), a.size(2)});
}

double psnr(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "psnr");
  double mse = 0.0;
  const std::vector<double>& ad = a.data();
  const std::vector<double>& bd = b.data();
  for (size_t i = 0; i < ad.size(); ++i) mse += (ad[i] - bd[i]) * (ad[i] - bd[i]);
  mse /= static_cast<double>(ad.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

Tensor smoothness_loss(const Tensor& disparity, const Tensor& image) {
  if (disparity.rank() != 3 || disparity.size(0) != 1)
    throw ShapeError("smoothness_loss: disparity is (1,H,W)");
  if (image.size(1) != disparity.size(1) || image.size(2) != disparity.size(2))
    throw ShapeError("smoothness_loss: resolution mismatch");
  const long h = disparity.size(1), w = disparity.size(2);

  Tensor norm = disparity / (reduce_mean(disparity) + 1e-7);
  Tensor dx_d = abs(slice(norm, 2, 1, w - 1) - slice(norm, 2, 0, w - 1));
  Tensor dy_d = abs(slice(norm, 1, 1, h - 1) - slice(norm, 1, 0, h - 1));
  Tensor dx_i = reduce_mean(abs(slice(image, 2, 1, w - 1) - slice(image, 2, 0, w - 1)), {0});
  Tensor dy_i = reduce_mean(abs(slice(image, 1, 1, h - 1) - slice(image, 1, 0, h - 1)), {0});
  return reduce_mean(dx_d * exp(-dx_i)) + reduce_mean(dy_d * exp(-dy_i));
}

Tensor reprojection_loss(const Tensor& target, const PinholeCamera& target_cam,
                         const std::vector<ReprojectionSource>& sources, const DepthMap& depth) {
  if (sources.empty()) throw ContractError("reprojection_loss: no sources");
  Tensor best;
  for (const ReprojectionSource& src : sources) {
    RigidFlow rf = rigid_flow(depth, target_cam, src.cam);
    Tensor warped = warp_image(src.image, rf.flow);
    Tensor photometric = reduce_mean(abs(target - warped), {0});  // (H,W) -> keep (1,H,W)? see below
    Tensor pe = 0.85 * (1.0 - ssim_map(target, warped)) * 0.5 +
                0.15 * reshape(photometric, {1, target.size(1), target.size(2)});
    best = best.defined() ? minimum(best, pe) : pe;
  }
  return reduce_mean(best);
}

Tensor render_loss(const Tensor& rendered, const Tensor& gt, const PerceptualHook& hook,
                   double lambda_p) {
  Tensor loss = l2(rendered, gt);
  if (hook) loss = loss + mul(hook(rendered, gt), lambda_p);
  return loss;
}

Tensor warp_loss(const Tensor& target, const Tensor& warped, const PerceptualHook& hook,
                 double lambda_s, double lambda_wp) {
  Tensor loss = l1(target, warped) + mul((1.0 - ssim(target, warped)) * 0.5, lambda_s);
  if (hook) loss = loss + mul(hook(target, warped), lambda_wp);
  return loss;
}

Tensor consistency_loss(const FlowField& f_fwd, const FlowField& f_bwd) {
  Tensor fwd_gap = reduce_mean(forward_backward_gap(f_fwd, f_bwd));
  Tensor bwd_gap = reduce_mean(forward_backward_gap(f_bwd, f_fwd));
  return (fwd_gap + bwd_gap) * 0.5;
}

Tensor stage1_total(const Tensor& loc, const Tensor& smooth, const Tensor& render,
                    const LossWeights& w, LossBreakdown* breakdown) {
  Tensor total = mul(loc, w.loc) + mul(smooth, w.smooth) + mul(render, w.render_w);
  if (breakdown) {
    breakdown->total = total.item();
    breakdown->items = {{"loc", loc.item()}, {"smooth", smooth.item()}, {"render", render.item()}};
  }
  return total;
}

Tensor stage2_total(const Tensor& warp, const Tensor& consist, const Tensor& render,
                    const LossWeights& w, LossBreakdown* breakdown) {
  Tensor total = mul(warp, w.warp) + mul(consist, w.consist) + mul(render, w.render_w);
  if (breakdown) {
    breakdown->total = total.item();
    breakdown->items = {
        {"warp", warp.item()}, {"consist", consist.item()}, {"render", render.item()}};
  }
  return total;
}

DepthErrorMetrics depth_metrics(const DepthMap& pred, const DepthMap& gt,
                                const std::vector<std::uint8_t>& mask) {
  check_same_shape(pred.t, gt.t, "depth_metrics");
  if (mask.size() != pred.t.data().size()) throw ShapeError("depth_metrics: mask size mismatch");
  const std::vector<double>& p = pred.t.data();
  const std::vector<double>& g = gt.t.data();
  DepthErrorMetrics m;
  long n = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    if (!mask[i]) continue;
    const double d = p[i] - g[i];
    m.abs_rel += std::abs(d) / g[i];
    m.sq_rel += d * d / g[i];
    m.rmse += d * d;
    ++n;
  }
  if (n == 0) throw ContractError("depth_metrics: empty mask");
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rmse = std::sqrt(m.rmse / n);
  return m;
}

}  // namespace sf
