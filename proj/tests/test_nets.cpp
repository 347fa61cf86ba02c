#include <cmath>
#include <set>

#include "doctest.h"
#include "sf/nets.hpp"
#include "support.hpp"

using namespace sf;

namespace {

ArchitectureConfig tiny_arch() {
  ArchitectureConfig a;
  a.base_channels = 4;
  a.pyramid_levels = 2;
  a.num_cameras = 2;
  a.sh_degree = 1;
  a.height = 16;
  a.width = 16;
  a.d_min = 1.0;
  a.d_max = 40.0;
  return a;
}

}  // namespace

TEST_CASE("init determinism and parameter inventory") {
  ArchitectureConfig a = tiny_arch();
  NetworkWeights w1 = init_weights(a, 42);
  NetworkWeights w2 = init_weights(a, 42);
  NetworkWeights w3 = init_weights(a, 43);
  REQUIRE(w1.params.size() == w2.params.size());
  bool all_equal = true, any_diff = false;
  for (const auto& [name, t] : w1.params) {
    if (t.data() != w2.params.at(name).data()) all_equal = false;
    if (t.data() != w3.params.at(name).data()) any_diff = true;
  }
  CHECK(all_equal);
  CHECK(any_diff);

  // parameter count equals the spec-derived sum and stays pinned
  long want = 0;
  for (const ConvSpec& s : architecture_specs(a)) want += s.cout * s.cin * s.k * s.k + s.cout;
  CHECK(w1.parameter_count() == want);

  // pinned count for the default architecture
  ArchitectureConfig def;
  CHECK(init_weights(def, 0).parameter_count() == 1516341);
}

TEST_CASE("depth output range is activation-enforced for arbitrary weights") {
  ArchitectureConfig a = tiny_arch();
  Rng rng(7);
  NetworkWeights w = init_weights(a, 1);
  // overwrite with wild values
  for (auto& [name, t] : w.params) {
    auto& d = t.mut_data();
    for (double& v : d) v = rng.uniform(-3.0, 3.0);
  }
  Tensor img = sft::random_tensor({3, 16, 16}, rng, 0.0, 1.0);
  DepthMap depth = depth_forward(w, img);
  for (double v : depth.t.data()) {
    CHECK(v > a.d_min);
    CHECK(v < a.d_max);
  }
}

TEST_CASE("zeroed depth head gives the constant mid-disparity depth") {
  ArchitectureConfig a = tiny_arch();
  NetworkWeights w = init_weights(a, 3);
  for (const char* k : {"D.head.kernel", "D.head.bias"}) {
    auto& d = w.params.at(k).mut_data();
    std::fill(d.begin(), d.end(), 0.0);
  }
  Rng rng(9);
  Tensor img = sft::random_tensor({3, 16, 16}, rng, 0.0, 1.0);
  DepthMap depth = depth_forward(w, img);
  const double want = 1.0 / (0.5 * (1.0 / a.d_min + 1.0 / a.d_max));
  for (double v : depth.t.data()) CHECK(v == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("gradient reaches the first depth conv") {
  ArchitectureConfig a = tiny_arch();
  NetworkWeights w = init_weights(a, 5);
  w.set_trainable(true);
  Rng rng(11);
  Tensor img = sft::random_tensor({3, 16, 16}, rng, 0.0, 1.0);
  reduce_mean(depth_forward(w, img).t).backward();
  REQUIRE(w.at("D.enc0.conv1.kernel").has_grad());
  double mag = 0;
  for (double g : w.at("D.enc0.conv1.kernel").grad()) mag += std::abs(g);
  CHECK(mag > 0.0);
}

TEST_CASE("gauss_param_forward") {
  ArchitectureConfig a = tiny_arch();
  NetworkWeights w = init_weights(a, 6);
  Rng rng(13);
  Tensor img = sft::random_tensor({3, 16, 16}, rng, 0.0, 1.0);
  DepthMap depth = depth_forward(w, img);
  RawAttributeMaps raw = gauss_param_forward(w, img, depth);

  SUBCASE("channel inventory is 8 + 3*(L+1)^2") {
    const long total =
        raw.rotation.size(0) + raw.scale.size(0) + raw.opacity.size(0) + raw.sh.size(0);
    CHECK(total == 8 + 3 * (a.sh_degree + 1) * (a.sh_degree + 1));
    CHECK(raw.rotation.shape() == Shape{4, 16, 16});
    CHECK(raw.sh.shape() == Shape{12, 16, 16});
  }
  SUBCASE("constant inputs give spatially constant interior outputs") {
    Tensor flat_img = Tensor::full({3, 16, 16}, 0.4);
    NetworkWeights w0 = init_weights(a, 6);
    DepthMap flat_depth = depth_forward(w0, flat_img);
    RawAttributeMaps r0 = gauss_param_forward(w0, flat_img, flat_depth);
    // compare interior pixels (borders feel the zero padding)
    const long m = 6;  // safely inside the receptive field
    for (long y = m; y < 16 - m - 1; ++y)
      for (long x = m; x < 16 - m - 1; ++x)
        CHECK(r0.opacity.at({0, y, x}) == doctest::Approx(r0.opacity.at({0, m, m})));
  }
  SUBCASE("render pipeline differentiates to P parameters") {
    NetworkWeights wt = init_weights(a, 6);
    wt.set_trainable(true);
    DepthMap d2 = depth_forward(wt, img);
    RawAttributeMaps r2 = gauss_param_forward(wt, img, d2);
    reduce_mean(square(r2.sh)).backward();
    CHECK(wt.at("P.body.conv1.kernel").has_grad());
  }
}

TEST_CASE("residual flow network") {
  ArchitectureConfig a = tiny_arch();
  NetworkWeights w = init_weights(a, 8);
  Rng rng(17);
  Tensor warped = sft::random_tensor({3, 16, 16}, rng, 0.0, 1.0);
  Tensor target = sft::random_tensor({3, 16, 16}, rng, 0.0, 1.0);
  FlowField rigid(sft::random_tensor({2, 16, 16}, rng, -2.0, 2.0));

  SUBCASE("zero-initialized heads give an exactly zero field at every level") {
    ResidualFlowResult res = residual_flow_forward(w, warped, target, rigid, 0);
    for (const Tensor& lvl : res.levels)
      for (double v : lvl.data()) REQUIRE(v == 0.0);
  }
  SUBCASE("level shapes follow the pyramid") {
    ResidualFlowResult res = residual_flow_forward(w, warped, target, rigid, 1);
    REQUIRE(res.levels.size() == static_cast<size_t>(a.pyramid_levels) + 1);
    for (int l = 0; l <= a.pyramid_levels; ++l)
      CHECK(res.levels[l].shape() == Shape{2, 16 >> l, 16 >> l});
    CHECK(res.flow.t.shape() == Shape{2, 16, 16});
  }
  SUBCASE("all-zero decoder weights give zero output even after training-like noise elsewhere") {
    NetworkWeights wn = init_weights(a, 9);
    Rng r2(23);
    for (auto& [name, t] : wn.params) {
      if (name.rfind("R.encoder.", 0) == 0) {
        auto& d = t.mut_data();
        for (double& v : d) v = r2.uniform(-1, 1);
      }
      if (name.rfind("R.dec", 0) == 0) {
        auto& d = t.mut_data();
        std::fill(d.begin(), d.end(), 0.0);
      }
    }
    ResidualFlowResult res = residual_flow_forward(wn, warped, target, rigid, 0);
    for (double v : res.flow.t.data()) REQUIRE(v == 0.0);
  }
  SUBCASE("camera index out of range") {
    CHECK_THROWS_AS(residual_flow_forward(w, warped, target, rigid, 2), ContractError);
  }
}

TEST_CASE("per-camera decoders are disjoint; the encoder is shared") {
  ArchitectureConfig a = tiny_arch();
  NetworkWeights w = init_weights(a, 10);

  // path disjointness
  std::set<std::string> dec0, dec1;
  for (const auto& [name, t] : w.params) {
    if (name.rfind("R.dec0.", 0) == 0) dec0.insert(name.substr(7));
    if (name.rfind("R.dec1.", 0) == 0) dec1.insert(name.substr(7));
  }
  CHECK(!dec0.empty());
  CHECK(dec0 == dec1);  // same structure, distinct parameters by prefix

  // encoder gradients accumulate from every camera; decoder grads stay local.
  // Nudge the heads so gradients actually flow.
  Rng rng(29);
  for (auto& [name, t] : w.params)
    if (name.rfind("R.dec", 0) == 0 && name.find("head") != std::string::npos) {
      auto& d = t.mut_data();
      for (double& v : d) v = rng.uniform(-0.2, 0.2);
    }
  w.set_trainable(true);
  Tensor warped = sft::random_tensor({3, 16, 16}, rng, 0.0, 1.0);
  Tensor target = sft::random_tensor({3, 16, 16}, rng, 0.0, 1.0);
  FlowField rigid(sft::random_tensor({2, 16, 16}, rng, -1.0, 1.0));

  Tensor loss0 = reduce_mean(square(residual_flow_forward(w, warped, target, rigid, 0).flow.t));
  loss0.backward();
  const std::vector<double> enc_after_cam0 = w.at("R.encoder.enc0.conv1.kernel").grad();
  CHECK(w.at("R.dec0.lvl0.conv1.kernel").has_grad());
  CHECK_FALSE(w.at("R.dec1.lvl0.conv1.kernel").has_grad());

  Tensor loss1 = reduce_mean(square(residual_flow_forward(w, warped, target, rigid, 1).flow.t));
  loss1.backward();
  const std::vector<double>& enc_after_both = w.at("R.encoder.enc0.conv1.kernel").grad();
  double delta = 0;
  for (size_t i = 0; i < enc_after_both.size(); ++i)
    delta += std::abs(enc_after_both[i] - enc_after_cam0[i]);
  CHECK(delta > 0.0);  // second camera accumulated into the shared encoder
  CHECK(w.at("R.dec1.lvl0.conv1.kernel").has_grad());
}

TEST_CASE("resolution divisibility is enforced") {
  ArchitectureConfig a = tiny_arch();
  NetworkWeights w = init_weights(a, 12);
  Rng rng(31);
  CHECK_THROWS_AS(depth_forward(w, sft::random_tensor({3, 10, 16}, rng, 0, 1)), ShapeError);
}
