#include "sf/nets.hpp"

#include <cmath>

#include "sf/rng.hpp"

namespace sf {

void ArchitectureConfig::validate() const {
  if (base_channels < 1) throw ContractError("arch: base_channels must be positive");
  if (pyramid_levels < 2) throw ContractError("arch: pyramid_levels must be >= 2");
  if (num_cameras < 1) throw ContractError("arch: need at least one camera");
  if (sh_degree != 0 && sh_degree != 1) throw ContractError("arch: sh degree 0 or 1");
  if (!(d_min > 0.0 && d_min < d_max)) throw ContractError("arch: need 0 < d_min < d_max");
  const long div = 1l << pyramid_levels;
  if (height % div != 0 || width % div != 0)
    throw ContractError("arch: resolution must be divisible by 2^pyramid_levels");
}

long ArchitectureConfig::channels_at(int level) const {
  long mult = 1l << level;
  if (mult > 4) mult = 4;
  return base_channels * mult;
}

const Tensor& NetworkWeights::at(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw ContractError("missing parameter " + name);
  return it->second;
}

long NetworkWeights::parameter_count() const {
  long n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

void NetworkWeights::set_trainable(bool trainable) {
  for (auto& [name, t] : params) t.set_requires_grad(trainable);
}

bool NetworkWeights::has_residual_net() const {
  auto it = params.lower_bound("R.");
  return it != params.end() && it->first.rfind("R.", 0) == 0;
}

std::vector<std::string> NetworkWeights::names_with_prefix(
    const std::vector<std::string>& prefixes) const {
  std::vector<std::string> out;
  for (const auto& [name, t] : params)
    for (const std::string& p : prefixes)
      if (name.rfind(p, 0) == 0) {
        out.push_back(name);
        break;
      }
  return out;
}

std::vector<ConvSpec> architecture_specs(const ArchitectureConfig& cfg) {
  cfg.validate();
  std::vector<ConvSpec> specs;
  const int levels = cfg.pyramid_levels;
  auto c = [&](int l) { return cfg.channels_at(l); };
  auto add = [&specs](std::string name, long cin, long cout, bool zero = false,
                      std::vector<double> bias = {}) {
    ConvSpec s;
    s.name = std::move(name);
    s.cin = cin;
    s.cout = cout;
    s.zero_init = zero;
    s.bias_init = std::move(bias);
    specs.push_back(std::move(s));
  };

  // Depth network: image + 2 coordinate channels in, sigmoid disparity out.
  add("D.enc0.conv1", 5, c(0));
  add("D.enc0.conv2", c(0), c(0));
  for (int l = 1; l <= levels; ++l) {
    add("D.enc" + std::to_string(l) + ".conv1", c(l - 1), c(l));
    add("D.enc" + std::to_string(l) + ".conv2", c(l), c(l));
  }
  for (int l = levels - 1; l >= 0; --l)
    add("D.dec" + std::to_string(l) + ".conv1", c(l + 1) + c(l), c(l));
  add("D.head", c(0), 1);

  // Gaussian parameter network: image + normalized inverse depth in.
  add("P.body.conv1", 4, c(0));
  add("P.body.conv2", c(0), c(0));
  add("P.body.conv3", c(0), c(0));
  add("P.head_rotation", c(0), 4, false, {1.0, 0.0, 0.0, 0.0});
  add("P.head_scale", c(0), 3, false, {std::log(0.05), std::log(0.05), std::log(0.05)});
  add("P.head_opacity", c(0), 1, false, {2.0});
  add("P.head_sh", c(0), sh_coeff_count(cfg.sh_degree));

  // Residual flow: shared encoder over (warped source, target, rigid flow).
  add("R.encoder.enc0.conv1", 8, c(0));
  add("R.encoder.enc0.conv2", c(0), c(0));
  for (int l = 1; l <= levels; ++l) {
    add("R.encoder.enc" + std::to_string(l) + ".conv1", c(l - 1), c(l));
    add("R.encoder.enc" + std::to_string(l) + ".conv2", c(l), c(l));
  }
  // Dedicated per-camera pyramidal decoders; heads zero-initialized so the
  // predicted residual starts at exactly zero. Each level sees the shared
  // features, those features warped by the current estimate, the estimate
  // itself, and the raw image pair at that scale (6 channels) so photometric
  // mismatch and its direction are visible without a trained encoder.
  for (int cam = 0; cam < cfg.num_cameras; ++cam) {
    const std::string base = "R.dec" + std::to_string(cam) + ".lvl";
    for (int l = levels; l >= 0; --l) {
      const std::string lvl = base + std::to_string(l);
      add(lvl + ".conv1", 2 * c(l) + 2 + 6 + 3, c(l));
      add(lvl + ".conv2", c(l), c(l));
      add(lvl + ".head", c(l), 2, true);
    }
  }
  return specs;
}

NetworkWeights init_weights(const ArchitectureConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  NetworkWeights w;
  w.config = cfg;
  for (const ConvSpec& s : architecture_specs(cfg)) {
    const long n = s.cout * s.cin * s.k * s.k;
    std::vector<double> kernel(n, 0.0);
    if (!s.zero_init) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(s.cin * s.k * s.k));
      for (long i = 0; i < n; ++i) kernel[i] = rng.uniform(-bound, bound);
    }
    std::vector<double> bias(s.cout, 0.0);
    if (!s.bias_init.empty()) {
      if (static_cast<long>(s.bias_init.size()) != s.cout)
        throw ContractError("bias_init width mismatch for " + s.name);
      bias = s.bias_init;
    }
    w.params[s.name + ".kernel"] = Tensor::leaf({s.cout, s.cin, s.k, s.k}, std::move(kernel));
    w.params[s.name + ".bias"] = Tensor::leaf({s.cout}, std::move(bias));
  }
  return w;
}

namespace {

Tensor conv_bias(const NetworkWeights& w, const std::string& name, const Tensor& x) {
  const Tensor& kernel = w.at(name + ".kernel");
  const Tensor& bias = w.at(name + ".bias");
  const long pad = (kernel.size(2) - 1) / 2;
  Tensor y = conv2d(x, kernel, 1, pad);
  return y + reshape(bias, {bias.size(0), 1, 1});
}

Tensor conv_relu(const NetworkWeights& w, const std::string& name, const Tensor& x) {
  return relu(conv_bias(w, name, x));
}

// Same-size central differences with replicated edges.
Tensor dx_image(const Tensor& t) {
  const long w = t.size(2);
  Tensor left = concat({slice(t, 2, 1, w - 1), slice(t, 2, w - 1, 1)}, 2);
  Tensor right = concat({slice(t, 2, 0, 1), slice(t, 2, 0, w - 1)}, 2);
  return (left - right) * 0.5;
}

Tensor dy_image(const Tensor& t) {
  const long h = t.size(1);
  Tensor down = concat({slice(t, 1, 1, h - 1), slice(t, 1, h - 1, 1)}, 1);
  Tensor up = concat({slice(t, 1, 0, 1), slice(t, 1, 0, h - 1)}, 1);
  return (down - up) * 0.5;
}

Tensor coord_channels(long h, long w) {
  std::vector<double> d(2 * h * w);
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      d[y * w + x] = h > 1 ? 2.0 * static_cast<double>(y) / static_cast<double>(h - 1) - 1.0 : 0.0;
      d[h * w + y * w + x] =
          w > 1 ? 2.0 * static_cast<double>(x) / static_cast<double>(w - 1) - 1.0 : 0.0;
    }
  return Tensor::from_data({2, h, w}, std::move(d));
}

void check_resolution(const ArchitectureConfig& cfg, long h, long w, const char* who) {
  const long div = 1l << cfg.pyramid_levels;
  if (h % div != 0 || w % div != 0)
    throw ShapeError(std::string(who) + ": resolution " + std::to_string(h) + "x" +
                     std::to_string(w) + " not divisible by 2^" +
                     std::to_string(cfg.pyramid_levels));
}

// Shared encoder-decoder trunk used by the depth network.
std::vector<Tensor> encode(const NetworkWeights& w, const std::string& prefix, const Tensor& in) {
  const int levels = w.config.pyramid_levels;
  std::vector<Tensor> feats;
  Tensor f = conv_relu(w, prefix + "enc0.conv2", conv_relu(w, prefix + "enc0.conv1", in));
  feats.push_back(f);
  for (int l = 1; l <= levels; ++l) {
    const std::string enc = prefix + "enc" + std::to_string(l) + ".";
    f = conv_relu(w, enc + "conv2", conv_relu(w, enc + "conv1", downsample2x(f)));
    feats.push_back(f);
  }
  return feats;
}

}  // namespace

DepthMap depth_forward(const NetworkWeights& w, const Tensor& image) {
  if (image.rank() != 3 || image.size(0) != 3) throw ShapeError("depth_forward: image is (3,H,W)");
  const long h = image.size(1), wd = image.size(2);
  check_resolution(w.config, h, wd, "depth_forward");

  Tensor in = concat({image, coord_channels(h, wd)}, 0);
  std::vector<Tensor> feats = encode(w, "D.", in);
  Tensor d = feats.back();
  for (int l = w.config.pyramid_levels - 1; l >= 0; --l)
    d = conv_relu(w, "D.dec" + std::to_string(l) + ".conv1", concat({upsample2x(d), feats[l]}, 0));
  // Saturated sigmoids can round to exactly 0 or 1 in floating point; the
  // clamp keeps the advertised open range (d_min, d_max) strict.
  Tensor s = clamp(sigmoid(conv_bias(w, "D.head", d)), 1e-12, 1.0 - 1e-12);

  const double inv_max = 1.0 / w.config.d_max;
  const double inv_min = 1.0 / w.config.d_min;
  Tensor disparity = s * (inv_min - inv_max) + inv_max;
  return DepthMap(1.0 / disparity);
}

Tensor normalized_disparity(const Tensor& depth, const ArchitectureConfig& cfg) {
  const double inv_max = 1.0 / cfg.d_max;
  const double inv_min = 1.0 / cfg.d_min;
  return (1.0 / depth - inv_max) * (1.0 / (inv_min - inv_max));
}

RawAttributeMaps gauss_param_forward(const NetworkWeights& w, const Tensor& image,
                                     const DepthMap& depth) {
  if (image.size(1) != depth.height() || image.size(2) != depth.width())
    throw ShapeError("gauss_param_forward: image and depth resolutions differ");
  Tensor in = concat({image, normalized_disparity(depth.t, w.config)}, 0);
  Tensor h = conv_relu(w, "P.body.conv1", in);
  h = conv_relu(w, "P.body.conv2", h);
  h = conv_relu(w, "P.body.conv3", h);
  RawAttributeMaps out;
  out.rotation = conv_bias(w, "P.head_rotation", h);
  out.scale = conv_bias(w, "P.head_scale", h);
  out.opacity = conv_bias(w, "P.head_opacity", h);
  out.sh = conv_bias(w, "P.head_sh", h);
  return out;
}

ResidualFlowResult residual_flow_forward(const NetworkWeights& w, const Tensor& warped_source,
                                         const Tensor& target, const FlowField& rigid,
                                         int camera_index) {
  if (camera_index < 0 || camera_index >= w.config.num_cameras)
    throw ContractError("residual_flow_forward: camera index out of range");
  const long h = target.size(1), wd = target.size(2);
  if (warped_source.shape() != target.shape() || rigid.height() != h || rigid.width() != wd)
    throw ShapeError("residual_flow_forward: input resolutions disagree");
  check_resolution(w.config, h, wd, "residual_flow_forward");
  const int levels = w.config.pyramid_levels;

  // Rigid flow is in pixels and can be large; scale it down as a network input.
  Tensor in = concat({warped_source, target, rigid.t * 0.1}, 0);
  std::vector<Tensor> feats = encode(w, "R.encoder.", in);

  // Flow pyramid of the rigid field: halving resolution halves magnitudes.
  std::vector<Tensor> rigid_lvl{rigid.t};
  std::vector<Tensor> source_lvl{warped_source};
  std::vector<Tensor> target_lvl{target};
  for (int l = 1; l <= levels; ++l) {
    rigid_lvl.push_back(downsample2x(rigid_lvl.back()) * 0.5);
    source_lvl.push_back(downsample2x(source_lvl.back()));
    target_lvl.push_back(downsample2x(target_lvl.back()));
  }

  const std::string dec = "R.dec" + std::to_string(camera_index) + ".lvl";
  std::vector<Tensor> out_levels(levels + 1);
  Tensor flow;
  for (int l = levels; l >= 0; --l) {
    const long lh = h >> l, lw = wd >> l;
    Tensor up = l == levels ? Tensor::zeros({2, lh, lw}) : mul(upsample2x(flow), 2.0);
    Tensor grid = pixel_grid(lh, lw);
    Tensor warped_feat = bilinear_sample(feats[l], grid + rigid_lvl[l] + up);
    // The source arrives pre-warped by the rigid flow; chain the current
    // estimate on top so the decoder sees the remaining mismatch directly.
    Tensor resampled_source = bilinear_sample(source_lvl[l], grid + up);
    // Lucas-Kanade style data-term channels: photometric mismatch times the
    // target's spatial gradient. They hand the zero-initialized head a
    // direction signal from the very first step.
    Tensor diff = reduce_mean(resampled_source - target_lvl[l], {0});
    Tensor tgx = reduce_mean(dx_image(target_lvl[l]), {0});
    Tensor tgy = reduce_mean(dy_image(target_lvl[l]), {0});
    Tensor lk = concat({reshape(diff, {1, lh, lw}), reshape(diff * tgx, {1, lh, lw}),
                        reshape(diff * tgy, {1, lh, lw})},
                       0);
    Tensor x = concat({feats[l], warped_feat, up, resampled_source, target_lvl[l], lk}, 0);
    const std::string lvl = dec + std::to_string(l) + ".";
    Tensor hid = conv_relu(w, lvl + "conv2", conv_relu(w, lvl + "conv1", x));
    Tensor delta = conv_bias(w, lvl + "head", hid);
    flow = up + delta;
    out_levels[l] = flow;
  }
  ResidualFlowResult res;
  res.flow = FlowField(out_levels[0]);
  res.levels = std::move(out_levels);
  return res;
}

}  // namespace sf
