#include "sf/train.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "sf/io.hpp"
#include "sf/pipeline.hpp"

namespace sf {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known)
      if (key == k) ok = true;
    if (!ok) throw IoError(std::string(where) + ": unknown config key '" + key + "'");
  }
}

void parse_arch(const json& j, ArchitectureConfig& a) {
  reject_unknown(j, {"base_channels", "pyramid_levels", "num_cameras", "sh_degree", "d_min",
                     "d_max", "height", "width"},
                 "arch");
  a.base_channels = j.value("base_channels", a.base_channels);
  a.pyramid_levels = j.value("pyramid_levels", a.pyramid_levels);
  a.num_cameras = j.value("num_cameras", a.num_cameras);
  a.sh_degree = j.value("sh_degree", a.sh_degree);
  a.d_min = j.value("d_min", a.d_min);
  a.d_max = j.value("d_max", a.d_max);
  a.height = j.value("height", a.height);
  a.width = j.value("width", a.width);
}

json arch_to_json(const ArchitectureConfig& a) {
  return json{{"base_channels", a.base_channels},
              {"pyramid_levels", a.pyramid_levels},
              {"num_cameras", a.num_cameras},
              {"sh_degree", a.sh_degree},
              {"d_min", a.d_min},
              {"d_max", a.d_max},
              {"height", a.height},
              {"width", a.width}};
}

std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::string config_hash(const TrainConfig& cfg) { return fnv1a_hex(train_config_to_json(cfg)); }

namespace {

void guard_finite(const LossBreakdown& bd, const char* stage) {
  for (const auto& [name, value] : bd.items)
    if (!std::isfinite(value))
      throw DomainError(std::string(stage) + ": non-finite loss component '" + name +
                        "' = " + std::to_string(value));
  if (!std::isfinite(bd.total))
    throw DomainError(std::string(stage) + ": non-finite total loss");
}

Tensor accumulate(Tensor& acc, const Tensor& term) {
  acc = acc.defined() ? acc + term : term;
  return acc;
}

void log_render(std::ofstream* log, int step, size_t cam, const char* view,
                const RenderStats& st) {
  if (!log || !log->is_open()) return;
  (*log) << "render step=" << step << " cam=" << cam << " view=" << view
         << " culled=" << st.culled << " skipped_singular=" << st.skipped_singular
         << " mean_blended=" << st.mean_blended << "\n";
}

struct StepLosses {
  Tensor total;
  LossBreakdown bd;
};

StepLosses stage1_losses(const SceneSample& sample, const NetworkWeights& w,
                         const TrainConfig& cfg, int step, std::ofstream* log) {
  const CloudParams cp{w.config.s_max(std::min(sample.cams[0].cam_t.fx, sample.cams[0].cam_t.fy)),
                       1e-4, w.config.sh_degree};
  const RenderConfig rc = render_config_for(sample, w.config);
  Tensor loc, smooth, rend;
  std::vector<GaussianCloud> clouds;
  for (size_t c = 0; c < sample.cams.size(); ++c) {
    const CameraFrame& f = sample.cams[c];
    DepthMap depth_t = depth_forward(w, f.image_t);
    DepthMap depth_t1 = depth_forward(w, f.image_t1);
    accumulate(loc, reprojection_loss(f.image_t, f.cam_t, {{f.image_t1, f.cam_t1}}, depth_t));
    accumulate(loc, reprojection_loss(f.image_t1, f.cam_t1, {{f.image_t, f.cam_t}}, depth_t1));
    accumulate(smooth,
               smoothness_loss(normalized_disparity(depth_t.t, w.config), f.image_t));
    accumulate(smooth,
               smoothness_loss(normalized_disparity(depth_t1.t, w.config), f.image_t1));
    RawAttributeMaps raw = gauss_param_forward(w, f.image_t, depth_t);
    clouds.push_back(pixel_aligned_cloud(depth_t, raw, f.cam_t, cp, static_cast<int>(c)));
  }
  GaussianCloud fused = fuse(clouds);
  int renders = 0;
  for (size_t c = 0; c < sample.cams.size(); ++c) {
    const CameraFrame& f = sample.cams[c];
    RenderOutput view = render(fused, f.cam_t1, rc);
    log_render(log, step, c, "t1", view.stats);
    accumulate(rend, render_loss(view.image, f.image_t1));
    ++renders;
    if (cfg.stage1_render_both_times) {
      RenderOutput view_t = render(fused, f.cam_t, rc);
      log_render(log, step, c, "t", view_t.stats);
      accumulate(rend, render_loss(view_t.image, f.image_t));
      ++renders;
    }
  }
  const double terms = 2.0 * static_cast<double>(sample.cams.size());
  StepLosses out;
  out.total = stage1_total(loc / terms, smooth / terms, rend / static_cast<double>(renders),
                           cfg.loss, &out.bd);
  return out;
}

StepLosses stage2_losses(const SceneSample& sample, const NetworkWeights& w,
                         const TrainConfig& cfg, bool use_residual, int step, std::ofstream* log,
                         SampleInference* inf_out = nullptr) {
  const RenderConfig rc = render_config_for(sample, w.config);
  SampleInference inf = forward_sample(sample, w, use_residual);
  Tensor warp, consist, rend;
  const double cams = static_cast<double>(sample.cams.size());
  const int levels = w.config.pyramid_levels;
  for (size_t c = 0; c < sample.cams.size(); ++c) {
    const CameraFrame& f = sample.cams[c];
    const CameraInference& ci = inf.cams[c];
    if (!cfg.no_warp_loss) {
      accumulate(warp, warp_loss(f.image_t1, warp_image(f.image_t, ci.total_bwd), nullptr,
                                 cfg.loss.warp_ssim, cfg.loss.warp_perceptual));
      accumulate(warp, warp_loss(f.image_t, warp_image(f.image_t1, ci.total_fwd), nullptr,
                                 cfg.loss.warp_ssim, cfg.loss.warp_perceptual));
      // Deep supervision down the flow pyramid: plain photometric L1 at each
      // coarser level. Full-resolution warping alone cannot see displacements
      // beyond the ~1 px bilinear basin; the coarse levels can.
      Tensor it = f.image_t, it1 = f.image_t1;
      Tensor rb = ci.rigid_bwd.t, rf = ci.rigid_fwd.t;
      Tensor pyr;
      for (int l = 1; l <= levels; ++l) {
        it = downsample2x(it);
        it1 = downsample2x(it1);
        rb = downsample2x(rb) * 0.5;
        rf = downsample2x(rf) * 0.5;
        Tensor total_b = use_residual ? rb + ci.residual_levels_bwd[l] : rb;
        Tensor total_f = use_residual ? rf + ci.residual_levels_fwd[l] : rf;
        accumulate(pyr, l1(it1, warp_image(it, FlowField(total_b))));
        accumulate(pyr, l1(it, warp_image(it1, FlowField(total_f))));
      }
      accumulate(warp, pyr / static_cast<double>(levels));
    }
    accumulate(consist, consistency_loss(ci.total_fwd, ci.total_bwd));
    RenderOutput view = render(inf.displaced_t1, f.cam_t1, rc);
    log_render(log, step, c, "t1+flow", view.stats);
    accumulate(rend, render_loss(view.image, f.image_t1));
  }
  int renders = static_cast<int>(sample.cams.size());
  if (cfg.midframe_render_supervision) {
    std::vector<Tensor> mids = render_midframe(sample, w, use_residual, &inf);
    for (size_t c = 0; c < sample.cams.size(); ++c) {
      accumulate(rend, render_loss(mids[c], sample.cams[c].image_mid));
      ++renders;
    }
  }
  Tensor warp_mean = cfg.no_warp_loss ? Tensor::scalar(0.0) : warp / (2.0 * cams);
  LossWeights lw = cfg.loss;
  if (cfg.no_warp_loss) lw.warp = 0.0;
  StepLosses out;
  out.total = stage2_total(warp_mean, consist / cams, rend / static_cast<double>(renders), lw,
                           &out.bd);
  if (inf_out) *inf_out = std::move(inf);
  return out;
}

StepLosses single_stage_losses(const SceneSample& sample, const NetworkWeights& w,
                               const TrainConfig& cfg, int step, std::ofstream* log) {
  // Every objective live from the first step, all networks trainable.
  const RenderConfig rc = render_config_for(sample, w.config);
  SampleInference inf;
  StepLosses s2 = stage2_losses(sample, w, cfg, true, step, log, &inf);
  Tensor loc, smooth, rend1;
  for (size_t c = 0; c < sample.cams.size(); ++c) {
    const CameraFrame& f = sample.cams[c];
    const CameraInference& ci = inf.cams[c];
    accumulate(loc, reprojection_loss(f.image_t, f.cam_t, {{f.image_t1, f.cam_t1}}, ci.depth_t));
    accumulate(loc,
               reprojection_loss(f.image_t1, f.cam_t1, {{f.image_t, f.cam_t}}, ci.depth_t1));
    accumulate(smooth, smoothness_loss(normalized_disparity(ci.depth_t.t, w.config), f.image_t));
    accumulate(smooth,
               smoothness_loss(normalized_disparity(ci.depth_t1.t, w.config), f.image_t1));
    RenderOutput view = render(inf.fused_t, f.cam_t, rc);
    log_render(log, step, c, "t", view.stats);
    accumulate(rend1, render_loss(view.image, f.image_t));
  }
  const double terms = 2.0 * static_cast<double>(sample.cams.size());
  LossBreakdown bd1;
  Tensor total1 = stage1_total(loc / terms, smooth / terms,
                               rend1 / static_cast<double>(sample.cams.size()), cfg.loss, &bd1);
  StepLosses out;
  out.total = total1 + s2.total;
  out.bd.items = s2.bd.items;
  for (const auto& [k, v] : bd1.items) out.bd.items["s1_" + k] = v;
  out.bd.total = out.total.item();
  return out;
}

void assert_frozen(const NetworkWeights& w) {
  for (const auto& [name, t] : w.params) {
    if (name.rfind("R.", 0) == 0) continue;
    if (t.requires_grad())
      throw ContractError("freeze contract: " + name + " is unexpectedly trainable");
    if (t.has_grad())
      throw ContractError("freeze contract: gradient appeared on frozen parameter " + name);
  }
}

}  // namespace

void Adam::step(NetworkWeights& w, const std::vector<std::string>& names) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const std::string& name : names) {
    Tensor& p = w.params.at(name);
    if (!p.has_grad()) continue;
    const std::vector<double>& g = p.grad();
    std::vector<double>& m = m_[name];
    std::vector<double>& v = v_[name];
    if (m.empty()) {
      m.assign(g.size(), 0.0);
      v.assign(g.size(), 0.0);
    }
    std::vector<double>& data = p.mut_data();
    for (size_t i = 0; i < g.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      data[i] -= lr_ * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    p.zero_grad();
  }
}

TrainConfig train_config_from_json(const std::string& text) {
  TrainConfig cfg;
  if (text.empty()) return cfg;
  json j = json::parse(text);
  reject_unknown(j,
                 {"stage", "epochs", "learning_rate", "batch_size", "seed", "loss", "adam",
                  "no_warp_loss", "midframe_render_supervision", "stage1_render_both_times",
                  "arch", "run_log_path"},
                 "train config");
  cfg.stage = j.value("stage", cfg.stage);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.no_warp_loss = j.value("no_warp_loss", cfg.no_warp_loss);
  cfg.midframe_render_supervision =
      j.value("midframe_render_supervision", cfg.midframe_render_supervision);
  cfg.stage1_render_both_times =
      j.value("stage1_render_both_times", cfg.stage1_render_both_times);
  cfg.run_log_path = j.value("run_log_path", cfg.run_log_path);
  if (j.count("loss")) {
    const json& l = j["loss"];
    reject_unknown(l,
                   {"loc", "smooth", "render", "warp", "consist", "perceptual", "warp_ssim",
                    "warp_perceptual"},
                   "loss weights");
    cfg.loss.loc = l.value("loc", cfg.loss.loc);
    cfg.loss.smooth = l.value("smooth", cfg.loss.smooth);
    cfg.loss.render_w = l.value("render", cfg.loss.render_w);
    cfg.loss.warp = l.value("warp", cfg.loss.warp);
    cfg.loss.consist = l.value("consist", cfg.loss.consist);
    cfg.loss.perceptual = l.value("perceptual", cfg.loss.perceptual);
    cfg.loss.warp_ssim = l.value("warp_ssim", cfg.loss.warp_ssim);
    cfg.loss.warp_perceptual = l.value("warp_perceptual", cfg.loss.warp_perceptual);
  }
  if (j.count("adam")) {
    const json& a = j["adam"];
    reject_unknown(a, {"beta1", "beta2", "eps"}, "adam");
    cfg.adam.beta1 = a.value("beta1", cfg.adam.beta1);
    cfg.adam.beta2 = a.value("beta2", cfg.adam.beta2);
    cfg.adam.eps = a.value("eps", cfg.adam.eps);
  }
  if (j.count("arch")) parse_arch(j["arch"], cfg.arch);
  if (cfg.epochs <= 0 || cfg.learning_rate <= 0.0)
    throw ContractError("train config: epochs and learning rate must be positive");
  if (cfg.batch_size != 1) throw ContractError("train config: only batch_size 1 is supported");
  return cfg;
}

std::string train_config_to_json(const TrainConfig& cfg) {
  json j{{"stage", cfg.stage},
         {"epochs", cfg.epochs},
         {"learning_rate", cfg.learning_rate},
         {"batch_size", cfg.batch_size},
         {"seed", cfg.seed},
         {"no_warp_loss", cfg.no_warp_loss},
         {"midframe_render_supervision", cfg.midframe_render_supervision},
         {"stage1_render_both_times", cfg.stage1_render_both_times},
         {"run_log_path", cfg.run_log_path},
         {"loss",
          {{"loc", cfg.loss.loc},
           {"smooth", cfg.loss.smooth},
           {"render", cfg.loss.render_w},
           {"warp", cfg.loss.warp},
           {"consist", cfg.loss.consist},
           {"perceptual", cfg.loss.perceptual},
           {"warp_ssim", cfg.loss.warp_ssim},
           {"warp_perceptual", cfg.loss.warp_perceptual}}},
         {"adam", {{"beta1", cfg.adam.beta1}, {"beta2", cfg.adam.beta2}, {"eps", cfg.adam.eps}}},
         {"arch", arch_to_json(cfg.arch)}};
  return j.dump(2);
}

SyntheticWorldConfig world_config_from_json(const std::string& text) {
  SyntheticWorldConfig w;
  if (text.empty()) return w;
  json j = json::parse(text);
  reject_unknown(j,
                 {"num_cameras", "width", "height", "static_boxes", "dynamic_objects",
                  "ego_speed", "object_speed", "samples_per_scene", "fov_deg", "d_min", "d_max",
                  "texture_seed"},
                 "world config");
  w.num_cameras = j.value("num_cameras", w.num_cameras);
  w.width = j.value("width", w.width);
  w.height = j.value("height", w.height);
  w.static_boxes = j.value("static_boxes", w.static_boxes);
  w.dynamic_objects = j.value("dynamic_objects", w.dynamic_objects);
  w.ego_speed = j.value("ego_speed", w.ego_speed);
  w.object_speed = j.value("object_speed", w.object_speed);
  w.samples_per_scene = j.value("samples_per_scene", w.samples_per_scene);
  w.fov_deg = j.value("fov_deg", w.fov_deg);
  w.d_min = j.value("d_min", w.d_min);
  w.d_max = j.value("d_max", w.d_max);
  w.texture_seed = j.value("texture_seed", w.texture_seed);
  return w;
}

std::string world_config_to_json(const SyntheticWorldConfig& w) {
  json j{{"num_cameras", w.num_cameras},
         {"width", w.width},
         {"height", w.height},
         {"static_boxes", w.static_boxes},
         {"dynamic_objects", w.dynamic_objects},
         {"ego_speed", w.ego_speed},
         {"object_speed", w.object_speed},
         {"samples_per_scene", w.samples_per_scene},
         {"fov_deg", w.fov_deg},
         {"d_min", w.d_min},
         {"d_max", w.d_max},
         {"texture_seed", w.texture_seed}};
  return j.dump(2);
}

TrainResult train_stage1(const Dataset& data, const TrainConfig& cfg) {
  if (data.samples.empty()) throw ContractError("train_stage1: empty dataset");
  NetworkWeights all = init_weights(cfg.arch, cfg.seed);
  NetworkWeights w;
  w.config = cfg.arch;
  for (auto& [name, t] : all.params)
    if (name.rfind("R.", 0) != 0) w.params[name] = t;  // D and P only

  std::ofstream log;
  if (!cfg.run_log_path.empty()) log.open(cfg.run_log_path, std::ios::app);
  Adam opt(cfg.learning_rate, cfg.adam);
  const std::vector<std::string> names = w.names_with_prefix({"D.", "P."});

  TrainResult res;
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch)
    for (const SceneSample& sample : data.samples) {
      StepLosses sl = stage1_losses(sample, w, cfg, step, &log);
      guard_finite(sl.bd, "stage1");
      sl.total.backward();
      opt.step(w, names);
      res.history.push_back({epoch, step++, sl.bd});
    }
  res.weights = w;
  return res;
}

TrainResult train_stage2(const Dataset& data, const NetworkWeights& stage1,
                         const TrainConfig& cfg) {
  if (data.samples.empty()) throw ContractError("train_stage2: empty dataset");
  if (!stage1.has("D.head.kernel") || !stage1.has("P.head_sh.kernel"))
    throw ContractError("train_stage2: input weights are not a stage-1 result");

  NetworkWeights w;
  w.config = stage1.config;
  // Frozen copies of the static networks.
  std::map<std::string, std::vector<double>> frozen_snapshot;
  for (const auto& [name, t] : stage1.params) {
    if (name.rfind("R.", 0) == 0) continue;
    Tensor copy = Tensor::from_data(t.shape(), t.data());
    w.params[name] = copy;
    frozen_snapshot[name] = t.data();
  }
  NetworkWeights fresh = init_weights(w.config, cfg.seed);
  for (auto& [name, t] : fresh.params)
    if (name.rfind("R.", 0) == 0) {
      t.set_requires_grad(true);
      w.params[name] = t;
    }

  std::ofstream log;
  if (!cfg.run_log_path.empty()) log.open(cfg.run_log_path, std::ios::app);
  Adam opt(cfg.learning_rate, cfg.adam);
  const std::vector<std::string> names = w.names_with_prefix({"R."});

  TrainResult res;
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch)
    for (const SceneSample& sample : data.samples) {
      StepLosses sl = stage2_losses(sample, w, cfg, true, step, &log);
      guard_finite(sl.bd, "stage2");
      sl.total.backward();
      assert_frozen(w);
      opt.step(w, names);
      res.history.push_back({epoch, step++, sl.bd});
    }

  for (const auto& [name, snap] : frozen_snapshot) {
    const std::vector<double>& now = w.params.at(name).data();
    if (now.size() != snap.size() ||
        std::memcmp(now.data(), snap.data(), snap.size() * sizeof(double)) != 0)
      throw ContractError("freeze contract: frozen parameter " + name + " changed");
  }
  res.weights = w;
  return res;
}

TrainResult train_single_stage(const Dataset& data, const TrainConfig& cfg) {
  if (data.samples.empty()) throw ContractError("train_single_stage: empty dataset");
  NetworkWeights w = init_weights(cfg.arch, cfg.seed);
  std::ofstream log;
  if (!cfg.run_log_path.empty()) log.open(cfg.run_log_path, std::ios::app);
  Adam opt(cfg.learning_rate, cfg.adam);
  const std::vector<std::string> names = w.names_with_prefix({"D.", "P.", "R."});

  TrainResult res;
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch)
    for (const SceneSample& sample : data.samples) {
      StepLosses sl = single_stage_losses(sample, w, cfg, step, &log);
      guard_finite(sl.bd, "single_stage");
      sl.total.backward();
      opt.step(w, names);
      res.history.push_back({epoch, step++, sl.bd});
    }
  res.weights = w;
  return res;
}

void save_weights(const std::string& path, const NetworkWeights& w,
                  const std::map<std::string, std::string>& manifest) {
  io::Checkpoint ckpt;
  ckpt.manifest = manifest;
  const ArchitectureConfig& a = w.config;
  ckpt.manifest["arch_base_channels"] = std::to_string(a.base_channels);
  ckpt.manifest["arch_pyramid_levels"] = std::to_string(a.pyramid_levels);
  ckpt.manifest["arch_num_cameras"] = std::to_string(a.num_cameras);
  ckpt.manifest["arch_sh_degree"] = std::to_string(a.sh_degree);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", a.d_min);
  ckpt.manifest["arch_d_min"] = buf;
  std::snprintf(buf, sizeof buf, "%.17g", a.d_max);
  ckpt.manifest["arch_d_max"] = buf;
  ckpt.manifest["arch_height"] = std::to_string(a.height);
  ckpt.manifest["arch_width"] = std::to_string(a.width);
  for (const auto& [name, t] : w.params) ckpt.tensors[name] = t.detach();
  io::save_checkpoint(path, ckpt);
}

NetworkWeights load_weights(const std::string& path,
                            std::map<std::string, std::string>* manifest) {
  io::Checkpoint ckpt = io::load_checkpoint(path);
  NetworkWeights w;
  auto need = [&](const char* key) {
    auto it = ckpt.manifest.find(key);
    if (it == ckpt.manifest.end())
      throw IoError("checkpoint missing manifest key " + std::string(key));
    return it->second;
  };
  w.config.base_channels = std::stol(need("arch_base_channels"));
  w.config.pyramid_levels = std::stoi(need("arch_pyramid_levels"));
  w.config.num_cameras = std::stoi(need("arch_num_cameras"));
  w.config.sh_degree = std::stoi(need("arch_sh_degree"));
  w.config.d_min = std::stod(need("arch_d_min"));
  w.config.d_max = std::stod(need("arch_d_max"));
  w.config.height = std::stol(need("arch_height"));
  w.config.width = std::stol(need("arch_width"));
  w.params = std::move(ckpt.tensors);
  if (manifest) *manifest = ckpt.manifest;
  return w;
}

LossBreakdown stage2_objective(const SceneSample& sample, const NetworkWeights& w,
                               const TrainConfig& cfg, bool use_residual) {
  StepLosses sl = stage2_losses(sample, w, cfg, use_residual, 0, nullptr);
  return sl.bd;
}

}  // namespace sf
