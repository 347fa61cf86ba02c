#include <cmath>

#include "doctest.h"
#include "sf/losses.hpp"
#include "support.hpp"

using namespace sf;

namespace {

// Independent SSIM written straight from the formula: per channel, Gaussian
// 11x11 window sigma 1.5, valid positions only.
double ssim_reference(const Tensor& a, const Tensor& b) {
  const long c = a.size(0), h = a.size(1), w = a.size(2);
  std::vector<double> win(121);
  double sum = 0;
  for (int y = 0; y < 11; ++y)
    for (int x = 0; x < 11; ++x) {
      const double dy = y - 5.0, dx = x - 5.0;
      win[y * 11 + x] = std::exp(-(dx * dx + dy * dy) / 4.5);
      sum += win[y * 11 + x];
    }
  for (double& v : win) v /= sum;

  double acc = 0;
  long count = 0;
  for (long ch = 0; ch < c; ++ch)
    for (long cy = 5; cy < h - 5; ++cy)
      for (long cx = 5; cx < w - 5; ++cx) {
        double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
        for (int y = 0; y < 11; ++y)
          for (int x = 0; x < 11; ++x) {
            const double va = a.at({ch, cy + y - 5, cx + x - 5});
            const double vb = b.at({ch, cy + y - 5, cx + x - 5});
            const double wv = win[y * 11 + x];
            mx += wv * va;
            my += wv * vb;
            mxx += wv * va * va;
            myy += wv * vb * vb;
            mxy += wv * va * vb;
          }
        const double sx = mxx - mx * mx, sy = myy - my * my, sxy = mxy - mx * my;
        const double c1 = 1e-4, c2 = 9e-4;
        acc += ((2 * mx * my + c1) * (2 * sxy + c2)) /
               ((mx * mx + my * my + c1) * (sx + sy + c2));
        ++count;
      }
  return acc / count;
}

Tensor checkerboard(long h, long w) {
  std::vector<double> d(3 * h * w);
  for (long c = 0; c < 3; ++c)
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) d[(c * h + y) * w + x] = ((x + y) % 2 == 0) ? 1.0 : 0.0;
  return Tensor::from_data({3, h, w}, std::move(d));
}

}  // namespace

TEST_CASE("l1 / l2") {
  Tensor x = Tensor::from_data({2}, {0, 1});
  CHECK(l1(x, x).item() == 0.0);
  CHECK(l1(x, Tensor::from_data({2}, {1, 1})).item() == doctest::Approx(0.5));
  CHECK(l2(Tensor::from_data({2}, {0, 2}), Tensor::zeros({2})).item() == doctest::Approx(2.0));
  CHECK_THROWS_AS(l1(Tensor::zeros({2}), Tensor::zeros({3})), ShapeError);
}

TEST_CASE("ssim") {
  Rng rng(3);
  SUBCASE("self similarity is 1") {
    Tensor img = sft::random_tensor({3, 16, 16}, rng, 0.0, 1.0);
    CHECK(ssim(img, img).item() == doctest::Approx(1.0));
  }
  SUBCASE("checkerboard against its inverse is negative") {
    Tensor cb = checkerboard(16, 16);
    Tensor inv = sub(1.0, cb);
    CHECK(ssim(cb, inv).item() < 0.0);
  }
  SUBCASE("matches an independent reference implementation") {
    Tensor a = sft::random_tensor({3, 16, 16}, rng, 0.0, 1.0);
    Tensor b = sft::random_tensor({3, 16, 16}, rng, 0.0, 1.0);
    CHECK(ssim(a, b).item() == doctest::Approx(ssim_reference(a, b)).epsilon(1e-6));
  }
  SUBCASE("symmetry within 1e-12") {
    Tensor a = sft::random_tensor({3, 12, 14}, rng, 0.0, 1.0);
    Tensor b = sft::random_tensor({3, 12, 14}, rng, 0.0, 1.0);
    CHECK(std::abs(ssim(a, b).item() - ssim(b, a).item()) < 1e-12);
  }
  SUBCASE("images below the window size are rejected") {
    CHECK_THROWS_AS(ssim(Tensor::zeros({3, 8, 8}), Tensor::zeros({3, 8, 8})), ContractError);
  }
}

TEST_CASE("psnr") {
  Rng rng(5);
  Tensor img = sft::random_tensor({3, 4, 4}, rng, 0.0, 1.0);
  CHECK(std::isinf(psnr(img, img)));
  Tensor off = add(img, 0.1);
  CHECK(psnr(img, off) == doctest::Approx(20.0).epsilon(1e-9));
}

TEST_CASE("smoothness_loss") {
  SUBCASE("constant disparity costs nothing") {
    Tensor d = Tensor::full({1, 6, 8}, 0.3);
    Tensor img = checkerboard(6, 8);
    CHECK(smoothness_loss(d, img).item() == doctest::Approx(0.0));
  }
  SUBCASE("ramp on a constant image costs its normalized slope") {
    const long h = 6, w = 8;
    std::vector<double> d(h * w);
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) d[y * w + x] = 1.0 + 0.2 * x;
    Tensor disp = Tensor::from_data({1, h, w}, d);
    Tensor img = Tensor::full({3, h, w}, 0.5);
    const double mean = 1.0 + 0.2 * (w - 1) / 2.0;
    const double want = 0.2 / (mean + 1e-7);  // x-term only; y-term is zero
    CHECK(smoothness_loss(disp, img).item() == doctest::Approx(want).epsilon(1e-9));
  }
  SUBCASE("a step on an image edge costs less than on a flat region") {
    const long h = 6, w = 8;
    std::vector<double> d(h * w);
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) d[y * w + x] = x < 4 ? 1.0 : 2.0;
    Tensor disp = Tensor::from_data({1, h, w}, d);
    std::vector<double> e(3 * h * w, 0.2);
    for (long c = 0; c < 3; ++c)
      for (long y = 0; y < h; ++y)
        for (long x = 4; x < w; ++x) e[(c * h + y) * w + x] = 0.9;  // edge aligned with the step
    Tensor img_edge = Tensor::from_data({3, h, w}, e);
    Tensor img_flat = Tensor::full({3, h, w}, 0.2);
    CHECK(smoothness_loss(disp, img_edge).item() < smoothness_loss(disp, img_flat).item());
  }
}

TEST_CASE("reprojection_loss") {
  PinholeCamera cam(10.0, 10.0, 7.5, 5.5, 16, 12, Eigen::Matrix4d::Identity());
  Rng rng(7);
  Tensor img = sft::random_tensor({3, 12, 16}, rng, 0.0, 1.0);
  Tensor depth = Tensor::full({1, 12, 16}, 4.0);

  SUBCASE("identical source with zero motion scores zero") {
    Tensor loss = reprojection_loss(img, cam, {{img, cam}}, DepthMap(depth));
    CHECK(loss.item() == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("empty source list rejected") {
    CHECK_THROWS_AS(reprojection_loss(img, cam, {}, DepthMap(depth)), ContractError);
  }
  SUBCASE("per-pixel minimum uses the better source") {
    // source A equals the target (perfect), source B is garbage
    Tensor garbage = sft::random_tensor({3, 12, 16}, rng, 0.0, 1.0);
    Tensor both = reprojection_loss(img, cam, {{garbage, cam}, {img, cam}}, DepthMap(depth));
    CHECK(both.item() == doctest::Approx(0.0).epsilon(1e-12));
    // and adding sources can only lower the per-pixel minimum
    Tensor only_garbage = reprojection_loss(img, cam, {{garbage, cam}}, DepthMap(depth));
    CHECK(both.item() <= only_garbage.item());
  }
}

TEST_CASE("render_loss and warp_loss") {
  Rng rng(9);
  Tensor a = sft::random_tensor({3, 16, 16}, rng, 0.0, 1.0);
  SUBCASE("identical inputs, no hook: zero") {
    CHECK(render_loss(a, a).item() == doctest::Approx(0.0));
    CHECK(warp_loss(a, a).item() == doctest::Approx(0.0));
  }
  SUBCASE("hook absent means exactly l2") {
    Tensor b = sft::random_tensor({3, 16, 16}, rng, 0.0, 1.0);
    CHECK(render_loss(a, b).item() == l2(a, b).item());
  }
  SUBCASE("hook contributes with weight lambda_p") {
    Tensor b = sft::random_tensor({3, 16, 16}, rng, 0.0, 1.0);
    PerceptualHook hook = [](const Tensor& x, const Tensor& y) { return l1(x, y); };
    const double want = l2(a, b).item() + 0.05 * l1(a, b).item();
    CHECK(render_loss(a, b, hook).item() == doctest::Approx(want).epsilon(1e-12));
  }
  SUBCASE("warp loss decomposes into l1 + 0.1*(1-ssim)/2") {
    Tensor b = clamp(add(a, 0.07), 0.0, 1.0);
    const double want = l1(a, b).item() + 0.1 * (1.0 - ssim(a, b).item()) / 2.0;
    CHECK(warp_loss(a, b).item() == doctest::Approx(want).epsilon(1e-12));
  }
  SUBCASE("larger uniform offset costs strictly more") {
    Tensor b1 = add(a, 0.03), b2 = add(a, 0.08);
    CHECK(warp_loss(a, b2).item() > warp_loss(a, b1).item());
  }
}

TEST_CASE("consistency_loss") {
  SUBCASE("exactly inverse constant flows score zero") {
    Tensor f = Tensor::full({2, 6, 8}, 0.8);
    Tensor g = Tensor::full({2, 6, 8}, -0.8);
    CHECK(consistency_loss(FlowField(f), FlowField(g)).item() == doctest::Approx(0.0));
  }
  SUBCASE("one-sided (3,0) flow scores 3") {
    std::vector<double> d(2 * 6 * 8, 0.0);
    for (int i = 0; i < 48; ++i) d[i] = 3.0;
    CHECK(consistency_loss(FlowField(Tensor::from_data({2, 6, 8}, d)),
                           FlowField(Tensor::zeros({2, 6, 8})))
              .item() == doctest::Approx(3.0));
  }
}

TEST_CASE("stage totals carry the published weights") {
  LossWeights w;
  Tensor unit = Tensor::scalar(1.0);
  LossBreakdown bd;
  CHECK(stage1_total(unit, unit, unit, w, &bd).item() == doctest::Approx(0.111).epsilon(1e-12));
  CHECK(bd.items.at("loc") == 1.0);
  CHECK(stage2_total(unit, unit, unit, w, &bd).item() ==
        doctest::Approx(0.03001).epsilon(1e-12));
  Tensor zero = Tensor::scalar(0.0);
  CHECK(stage1_total(zero, zero, zero, w).item() == 0.0);
  CHECK(stage2_total(zero, zero, zero, w).item() == 0.0);

  // linearity probes: each component scales by exactly its weight
  CHECK(stage1_total(unit, zero, zero, w).item() == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(stage1_total(zero, unit, zero, w).item() == doctest::Approx(0.001).epsilon(1e-15));
  CHECK(stage1_total(zero, zero, unit, w).item() == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(stage2_total(unit, zero, zero, w).item() == doctest::Approx(0.02).epsilon(1e-15));
  CHECK(stage2_total(zero, unit, zero, w).item() == doctest::Approx(1e-5).epsilon(1e-15));
  CHECK(stage2_total(zero, zero, unit, w).item() == doctest::Approx(0.01).epsilon(1e-15));
}

TEST_CASE("depth metrics") {
  Tensor ones = Tensor::full({1, 4, 4}, 1.0);
  Tensor twos = Tensor::full({1, 4, 4}, 2.0);
  std::vector<std::uint8_t> mask(16, 1);
  SUBCASE("perfect prediction") {
    DepthErrorMetrics m = depth_metrics(DepthMap(ones), DepthMap(ones), mask);
    CHECK(m.abs_rel == 0.0);
    CHECK(m.sq_rel == 0.0);
    CHECK(m.rmse == 0.0);
  }
  SUBCASE("doubled prediction on unit ground truth") {
    DepthErrorMetrics m = depth_metrics(DepthMap(twos), DepthMap(ones), mask);
    CHECK(m.abs_rel == doctest::Approx(1.0));
    CHECK(m.sq_rel == doctest::Approx(1.0));
    CHECK(m.rmse == doctest::Approx(1.0));
  }
  SUBCASE("empty mask rejected") {
    std::vector<std::uint8_t> empty(16, 0);
    CHECK_THROWS_AS(depth_metrics(DepthMap(ones), DepthMap(ones), empty), ContractError);
  }
}

TEST_CASE("losses are non-negative and differentiable") {
  Rng rng(11);
  Tensor a = sft::random_tensor({3, 16, 16}, rng, 0.1, 0.9);
  Tensor b = sft::random_tensor({3, 16, 16}, rng, 0.1, 0.9);
  CHECK(l1(a, b).item() >= 0.0);
  CHECK(l2(a, b).item() >= 0.0);
  CHECK(warp_loss(a, b).item() >= 0.0);

  CHECK(grad_check([&](const Tensor& t) { return l1(t, b); }, a, 1e-5) < 1e-4);
  CHECK(grad_check([&](const Tensor& t) { return l2(t, b); }, a, 1e-5) < 1e-4);
  CHECK(grad_check([&](const Tensor& t) { return ssim(t, b); }, a, 1e-5) < 1e-4);
  CHECK(grad_check([&](const Tensor& t) { return warp_loss(t, b); }, a, 1e-5) < 1e-4);
  CHECK(grad_check([&](const Tensor& t) { return render_loss(t, b); }, a, 1e-5) < 1e-4);

  Tensor disp = sft::random_tensor({1, 12, 12}, rng, 0.2, 1.0);
  Tensor img = sft::random_tensor({3, 12, 12}, rng, 0.0, 1.0);
  CHECK(grad_check([&](const Tensor& t) { return smoothness_loss(t, img); }, disp, 1e-5) < 1e-4);

  Tensor f = sft::random_tensor({2, 12, 12}, rng, -0.6, 0.6);
  Tensor g = sft::random_tensor({2, 12, 12}, rng, -0.6, 0.6);
  CHECK(grad_check(
            [&](const Tensor& t) { return consistency_loss(FlowField(t), FlowField(g)); }, f,
            1e-5) < 1e-4);

  PinholeCamera cam_a(12.0, 12.0, 7.5, 7.5, 16, 16, Eigen::Matrix4d::Identity());
  Eigen::Matrix4d p = Eigen::Matrix4d::Identity();
  p(0, 3) = 0.25;
  PinholeCamera cam_b(12.0, 12.0, 7.5, 7.5, 16, 16, p);
  Tensor depth = sft::random_tensor({1, 16, 16}, rng, 3.0, 5.0);
  CHECK(grad_check(
            [&](const Tensor& t) {
              return reprojection_loss(a, cam_a, {{b, cam_b}}, DepthMap(t));
            },
            depth, 1e-5) < 1e-4);
}
