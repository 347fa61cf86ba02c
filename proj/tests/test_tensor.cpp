#include <cmath>

#include "doctest.h"
#include "sf/tensor.hpp"
#include "support.hpp"

using namespace sf;

TEST_CASE("elementwise basics") {
  Tensor a = Tensor::from_data({2}, {1, 2});
  Tensor b = Tensor::from_data({2}, {3, 4});
  CHECK(add(a, b).data() == std::vector<double>{4, 6});
  CHECK(sub(a, b).data() == std::vector<double>{-2, -2});
  CHECK(mul(a, b).data() == std::vector<double>{3, 8});
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == doctest::Approx(0.5));
  CHECK(minimum(a, b).data() == std::vector<double>{1, 2});
  CHECK(maximum(a, b).data() == std::vector<double>{3, 4});
}

TEST_CASE("broadcasting shape rules") {
  Tensor a = Tensor::zeros({2, 1, 3});
  Tensor b = Tensor::zeros({4, 3});
  CHECK(mul(a, b).shape() == Shape{2, 4, 3});
  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({2, 4})), ShapeError);
}

TEST_CASE("broadcast add/mul agree with explicit tiling, exhaustive rank<=3 sizes<=4") {
  Rng rng(11);
  std::vector<Shape> shapes;
  for (long a : {1, 2, 3, 4}) {
    shapes.push_back({a});
    for (long b : {1, 2, 4}) {
      shapes.push_back({a, b});
      for (long c : {1, 3, 4}) shapes.push_back({a, b, c});
    }
  }
  auto broadcastable = [](const Shape& x, const Shape& y, Shape& out) {
    const int r = static_cast<int>(std::max(x.size(), y.size()));
    out.assign(r, 1);
    for (int i = 0; i < r; ++i) {
      long dx = i < r - static_cast<int>(x.size()) ? 1 : x[i - (r - x.size())];
      long dy = i < r - static_cast<int>(y.size()) ? 1 : y[i - (r - y.size())];
      if (dx != dy && dx != 1 && dy != 1) return false;
      out[i] = std::max(dx, dy);
    }
    return true;
  };
  auto tile_value = [](const Tensor& t, const Shape& out, long flat) {
    // walk the multi-index of `out`, clamping broadcast axes to 0
    const int r = static_cast<int>(out.size());
    std::vector<long> idx(r);
    for (int d = r - 1; d >= 0; --d) {
      idx[d] = flat % out[d];
      flat /= out[d];
    }
    long off = 0;
    const int rs = t.rank();
    for (int d = 0; d < rs; ++d) {
      const long dim = t.shape()[d];
      const long i = idx[d + (r - rs)] % dim;  // dim==1 -> 0
      off = off * dim + (dim == 1 ? 0 : i);
    }
    return t.data()[off];
  };
  int pairs = 0;
  for (const Shape& sa : shapes)
    for (const Shape& sb : shapes) {
      Shape out;
      if (!broadcastable(sa, sb, out)) continue;
      Tensor a = sft::random_tensor(sa, rng);
      Tensor b = sft::random_tensor(sb, rng);
      Tensor s = add(a, b), p = mul(a, b);
      REQUIRE(s.shape() == out);
      for (long i = 0; i < s.numel(); ++i) {
        const double va = tile_value(a, out, i), vb = tile_value(b, out, i);
        REQUIRE(s.data()[i] == va + vb);
        REQUIRE(p.data()[i] == va * vb);
      }
      ++pairs;
    }
  CHECK(pairs > 500);
}

TEST_CASE("div reports zero divisors") {
  Tensor a = Tensor::from_data({2}, {1, 2});
  Tensor b = Tensor::from_data({2}, {1, 0});
  CHECK_THROWS_AS(div(a, b), DomainError);
}

TEST_CASE("matmul") {
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  CHECK(matmul(eye, m).data() == m.data());
  Tensor r = matmul(Tensor::from_data({1, 2}, {1, 0}), Tensor::from_data({2, 1}, {0, 1}));
  CHECK(r.data() == std::vector<double>{0});

  Rng rng(3);
  Tensor a = sft::random_tensor({3, 3}, rng);
  Tensor b = sft::random_tensor({3, 3}, rng);
  auto want = sft::matmul_oracle(a.data(), b.data(), 3, 3, 3);
  CHECK(sft::max_abs_diff(matmul(a, b).data(), want) < 1e-12);
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST_CASE("conv2d against the six-loop oracle") {
  SUBCASE("1x1 identity kernel") {
    Rng rng(5);
    Tensor in = sft::random_tensor({1, 4, 5}, rng);
    Tensor k = Tensor::from_data({1, 1, 1, 1}, {1.0});
    CHECK(conv2d(in, k, 1, 0).data() == in.data());
  }
  SUBCASE("all-ones 3x3 on all-ones 5x5") {
    Tensor in = Tensor::full({1, 5, 5}, 1.0);
    Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor out = conv2d(in, k, 1, 0);
    CHECK(out.shape() == Shape{1, 3, 3});
    for (double v : out.data()) CHECK(v == doctest::Approx(9.0));
  }
  SUBCASE("random case incl. stride and padding") {
    Rng rng(7);
    for (long stride : {1l, 2l}) {
      Tensor in = sft::random_tensor({3, 7, 9}, rng);
      Tensor k = sft::random_tensor({4, 3, 3, 3}, rng);
      Tensor out = conv2d(in, k, stride, 1);
      auto want = sft::conv2d_oracle(in.data(), k.data(), 3, 7, 9, 4, 3, stride, 1);
      CHECK(sft::max_abs_diff(out.data(), want) < 1e-12);
    }
  }
  SUBCASE("non-integral output size") {
    CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 6, 6}), Tensor::zeros({1, 1, 3, 3}), 2, 0),
                    ShapeError);
  }
}

TEST_CASE("bilinear_sample values") {
  // image with a single row: pixels 0,1 valued 0 and 1
  Tensor img = Tensor::from_data({1, 1, 2}, {0.0, 1.0});
  Tensor mid = bilinear_sample(img, Tensor::from_data({2, 1, 1}, {0.5, 0.0}));
  CHECK(mid.item() == doctest::Approx(0.5));

  Rng rng(9);
  Tensor big = sft::random_tensor({2, 5, 6}, rng);
  Tensor at = bilinear_sample(big, Tensor::from_data({2, 1, 1}, {3.0, 2.0}));
  CHECK(at.at({0, 0, 0}) == big.at({0, 2, 3}));
  CHECK(at.at({1, 0, 0}) == big.at({1, 2, 3}));
}

TEST_CASE("bilinear_sample identity grid is bit-exact") {
  Rng rng(13);
  Tensor img = sft::random_tensor({3, 4, 5}, rng);
  std::vector<double> g(2 * 4 * 5);
  for (long y = 0; y < 4; ++y)
    for (long x = 0; x < 5; ++x) {
      g[y * 5 + x] = static_cast<double>(x);
      g[20 + y * 5 + x] = static_cast<double>(y);
    }
  Tensor out = bilinear_sample(img, Tensor::from_data({2, 4, 5}, g));
  CHECK(out.data() == img.data());
}

TEST_CASE("reductions and shape ops") {
  Tensor v = Tensor::from_data({4}, {1, 2, 3, 4});
  CHECK(reduce_mean(v).item() == doctest::Approx(2.5));
  CHECK(reduce_sum(v).item() == doctest::Approx(10.0));

  Tensor m = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(reduce_sum(m, {0}).data() == std::vector<double>{5, 7, 9});
  CHECK(reduce_sum(m, {1}).data() == std::vector<double>{6, 15});
  CHECK_THROWS_AS(reduce_sum(m, {2}), ShapeError);

  CHECK(transpose(m).shape() == Shape{3, 2});
  CHECK(transpose(m).data() == std::vector<double>{1, 4, 2, 5, 3, 6});
  CHECK(reshape(m, {3, 2}).data() == m.data());
  CHECK(slice(m, 1, 1, 2).data() == std::vector<double>{2, 3, 5, 6});
  Tensor c = concat({m, m}, 0);
  CHECK(c.shape() == Shape{4, 3});
}

TEST_CASE("upsample2x / downsample2x") {
  SUBCASE("constant image stays constant") {
    Tensor c = Tensor::full({2, 3, 4}, 0.7);
    Tensor up = upsample2x(c);
    CHECK(up.shape() == Shape{2, 6, 8});
    for (double v : up.data()) CHECK(v == doctest::Approx(0.7));
  }
  SUBCASE("downsample(upsample(x)) exact on a bilinear ramp") {
    const long h = 6, w = 8;
    std::vector<double> d(h * w);
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) d[y * w + x] = 0.3 + 0.11 * x - 0.07 * y + 0.02 * x * y;
    Tensor ramp = Tensor::from_data({1, h, w}, std::move(d));
    Tensor round = downsample2x(upsample2x(ramp));
    CHECK(sft::max_abs_diff(round.data(), ramp.data()) < 1e-6);
  }
  SUBCASE("downsample is 2x2 averaging") {
    Tensor t = Tensor::from_data({1, 2, 2}, {1, 2, 3, 4});
    CHECK(downsample2x(t).item() == doctest::Approx(2.5));
  }
}
