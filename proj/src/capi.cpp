#include "splatflow.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sf/io.hpp"
#include "sf/pipeline.hpp"
#include "sf/synth.hpp"
#include "sf/train.hpp"

namespace {

thread_local std::string g_last_error;

sf_status fail(sf_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

template <typename F>
sf_status guarded(F&& f) {
  try {
    return f();
  } catch (const sf::ShapeError& e) {
    return fail(SF_ERR_SHAPE, e.what());
  } catch (const sf::DomainError& e) {
    return fail(SF_ERR_DOMAIN, e.what());
  } catch (const sf::ContractError& e) {
    return fail(SF_ERR_CONTRACT, e.what());
  } catch (const sf::IoError& e) {
    return fail(SF_ERR_IO, e.what());
  } catch (const sf::GenerationError& e) {
    return fail(SF_ERR_GENERATION, e.what());
  } catch (const std::exception& e) {
    return fail(SF_ERR_INTERNAL, e.what());
  }
}

sf_status copy_out(const std::string& s, char* buf, size_t buf_len) {
  if (!buf || buf_len == 0) return fail(SF_ERR_INVALID_ARGUMENT, "null output buffer");
  if (s.size() + 1 > buf_len)
    return fail(SF_ERR_INVALID_ARGUMENT,
                "buffer too small: need " + std::to_string(s.size() + 1) + " bytes");
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return SF_OK;
}

void write_history(const std::string& ckpt_path, const sf::TrainResult& result) {
  std::ofstream f(ckpt_path + ".history.jsonl");
  for (const sf::StepRecord& r : result.history) {
    nlohmann::json j{{"epoch", r.epoch}, {"step", r.step}, {"total", r.losses.total}};
    for (const auto& [k, v] : r.losses.items) j[k] = v;
    f << j.dump() << "\n";
  }
}

}  // namespace

struct sf_dataset {
  sf::Dataset data;
};
struct sf_weights {
  sf::NetworkWeights weights;
  std::map<std::string, std::string> manifest;
};

namespace {

sf_status check_sample_index(const sf_dataset* data, int sample_index) {
  if (!data) return fail(SF_ERR_INVALID_ARGUMENT, "null dataset");
  if (sample_index < 0 || sample_index >= static_cast<int>(data->data.samples.size()))
    return fail(SF_ERR_INVALID_ARGUMENT, "sample index out of range");
  return SF_OK;
}

}  // namespace

extern "C" {

const char* sf_status_name(sf_status status) {
  switch (status) {
    case SF_OK: return "ok";
    case SF_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case SF_ERR_SHAPE: return "shape_error";
    case SF_ERR_DOMAIN: return "domain_error";
    case SF_ERR_CONTRACT: return "contract_error";
    case SF_ERR_IO: return "io_error";
    case SF_ERR_GENERATION: return "generation_error";
    case SF_ERR_INTERNAL: return "internal_error";
  }
  return "unknown";
}

const char* sf_version(void) { return "0.1.0"; }

const char* sf_last_error(void) { return g_last_error.c_str(); }

sf_status sf_synth(const char* world_json, uint64_t seed, int scene_count, const char* out_dir) {
  return guarded([&]() -> sf_status {
    if (!out_dir || scene_count <= 0)
      return fail(SF_ERR_INVALID_ARGUMENT, "sf_synth: need an output dir and scene_count > 0");
    sf::Dataset dataset;
    dataset.world = sf::world_config_from_json(world_json ? world_json : "");
    for (int i = 0; i < scene_count; ++i) {
      std::vector<sf::SceneSample> scene = sf::generate_scene(dataset.world, seed + i);
      for (auto& s : scene) dataset.samples.push_back(std::move(s));
    }
    sf::save_dataset(out_dir, dataset);
    return SF_OK;
  });
}

sf_status sf_dataset_open(const char* dir, sf_dataset** out) {
  return guarded([&]() -> sf_status {
    if (!dir || !out) return fail(SF_ERR_INVALID_ARGUMENT, "sf_dataset_open: null argument");
    auto* handle = new sf_dataset{sf::load_dataset(dir)};
    *out = handle;
    return SF_OK;
  });
}

void sf_dataset_free(sf_dataset* dataset) { delete dataset; }

int sf_dataset_sample_count(const sf_dataset* dataset) {
  return dataset ? static_cast<int>(dataset->data.samples.size()) : 0;
}

sf_status sf_train_stage1(const sf_dataset* data, const char* config_json, const char* out_ckpt) {
  return guarded([&]() -> sf_status {
    if (!data || !out_ckpt) return fail(SF_ERR_INVALID_ARGUMENT, "sf_train_stage1: null argument");
    sf::TrainConfig cfg = sf::train_config_from_json(config_json ? config_json : "");
    cfg.stage = 1;
    if (cfg.run_log_path.empty()) cfg.run_log_path = std::string(out_ckpt) + ".render_log.txt";
    sf::TrainResult result = sf::train_stage1(data->data, cfg);
    std::map<std::string, std::string> manifest{{"stage", "1"},
                                                {"epoch", std::to_string(cfg.epochs)},
                                                {"seed", std::to_string(cfg.seed)},
                                                {"config_hash", sf::config_hash(cfg)}};
    sf::save_weights(out_ckpt, result.weights, manifest);
    write_history(out_ckpt, result);
    return SF_OK;
  });
}

sf_status sf_train_stage2(const sf_dataset* data, const char* stage1_ckpt,
                          const char* config_json, int no_warp_loss, const char* out_ckpt) {
  return guarded([&]() -> sf_status {
    if (!data || !stage1_ckpt || !out_ckpt)
      return fail(SF_ERR_INVALID_ARGUMENT, "sf_train_stage2: null argument");
    std::map<std::string, std::string> manifest;
    sf::NetworkWeights stage1 = sf::load_weights(stage1_ckpt, &manifest);
    auto it = manifest.find("stage");
    if (it == manifest.end() || it->second != "1")
      return fail(SF_ERR_CONTRACT, "sf_train_stage2: checkpoint is not a stage-1 result");
    sf::TrainConfig cfg = sf::train_config_from_json(config_json ? config_json : "");
    cfg.stage = 2;
    cfg.no_warp_loss = no_warp_loss != 0;
    cfg.arch = stage1.config;
    if (cfg.run_log_path.empty()) cfg.run_log_path = std::string(out_ckpt) + ".render_log.txt";
    sf::TrainResult result = sf::train_stage2(data->data, stage1, cfg);
    std::map<std::string, std::string> out_manifest{
        {"stage", "2"},
        {"epoch", std::to_string(cfg.epochs)},
        {"seed", std::to_string(cfg.seed)},
        {"config_hash", sf::config_hash(cfg)},
        {"no_warp_loss", cfg.no_warp_loss ? "1" : "0"}};
    sf::save_weights(out_ckpt, result.weights, out_manifest);
    write_history(out_ckpt, result);
    return SF_OK;
  });
}

sf_status sf_train_single_stage(const sf_dataset* data, const char* config_json,
                                const char* out_ckpt) {
  return guarded([&]() -> sf_status {
    if (!data || !out_ckpt)
      return fail(SF_ERR_INVALID_ARGUMENT, "sf_train_single_stage: null argument");
    sf::TrainConfig cfg = sf::train_config_from_json(config_json ? config_json : "");
    if (cfg.run_log_path.empty()) cfg.run_log_path = std::string(out_ckpt) + ".render_log.txt";
    sf::TrainResult result = sf::train_single_stage(data->data, cfg);
    std::map<std::string, std::string> manifest{{"stage", "single"},
                                                {"epoch", std::to_string(cfg.epochs)},
                                                {"seed", std::to_string(cfg.seed)},
                                                {"config_hash", sf::config_hash(cfg)}};
    sf::save_weights(out_ckpt, result.weights, manifest);
    write_history(out_ckpt, result);
    return SF_OK;
  });
}

sf_status sf_weights_load(const char* path, sf_weights** out) {
  return guarded([&]() -> sf_status {
    if (!path || !out) return fail(SF_ERR_INVALID_ARGUMENT, "sf_weights_load: null argument");
    auto* handle = new sf_weights;
    handle->weights = sf::load_weights(path, &handle->manifest);
    *out = handle;
    return SF_OK;
  });
}

void sf_weights_free(sf_weights* weights) { delete weights; }

sf_status sf_weights_manifest(const sf_weights* weights, char* buf, size_t buf_len) {
  if (!weights) return fail(SF_ERR_INVALID_ARGUMENT, "sf_weights_manifest: null weights");
  std::string text;
  for (const auto& [k, v] : weights->manifest) text += k + "=" + v + "\n";
  return copy_out(text, buf, buf_len);
}

int64_t sf_weights_parameter_count(const sf_weights* weights) {
  return weights ? weights->weights.parameter_count() : 0;
}

sf_status sf_infer(const sf_weights* weights, const sf_dataset* data, int sample_index,
                   int no_residual, const char* out_dir) {
  return guarded([&]() -> sf_status {
    if (!weights || !out_dir) return fail(SF_ERR_INVALID_ARGUMENT, "sf_infer: null argument");
    sf_status st = check_sample_index(data, sample_index);
    if (st != SF_OK) return st;
    sf::export_inference(data->data.samples[sample_index], weights->weights, no_residual == 0,
                         out_dir);
    return SF_OK;
  });
}

sf_status sf_render_mid(const sf_weights* weights, const sf_dataset* data, int sample_index,
                        int no_residual, const char* out_dir) {
  return guarded([&]() -> sf_status {
    if (!weights || !out_dir) return fail(SF_ERR_INVALID_ARGUMENT, "sf_render_mid: null argument");
    sf_status st = check_sample_index(data, sample_index);
    if (st != SF_OK) return st;
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const sf::SceneSample& sample = data->data.samples[sample_index];
    std::vector<sf::Tensor> mids =
        sf::render_midframe(sample, weights->weights, no_residual == 0);
    for (size_t c = 0; c < mids.size(); ++c) {
      const std::string base = (fs::path(out_dir) / ("mid_cam" + std::to_string(c))).string();
      sf::io::save_ppm(base + ".ppm", mids[c]);
      sf::io::save_png16(base + ".png", mids[c]);
    }
    return SF_OK;
  });
}

sf_status sf_infer_sample_dir(const sf_weights* weights, const char* sample_dir,
                              int no_residual, const char* out_dir) {
  return guarded([&]() -> sf_status {
    if (!weights || !sample_dir || !out_dir)
      return fail(SF_ERR_INVALID_ARGUMENT, "sf_infer_sample_dir: null argument");
    sf::SceneSample sample = sf::load_sample(sample_dir);
    sf::export_inference(sample, weights->weights, no_residual == 0, out_dir);
    return SF_OK;
  });
}

sf_status sf_render_mid_sample_dir(const sf_weights* weights, const char* sample_dir,
                                   int no_residual, const char* out_dir) {
  return guarded([&]() -> sf_status {
    if (!weights || !sample_dir || !out_dir)
      return fail(SF_ERR_INVALID_ARGUMENT, "sf_render_mid_sample_dir: null argument");
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    sf::SceneSample sample = sf::load_sample(sample_dir);
    std::vector<sf::Tensor> mids =
        sf::render_midframe(sample, weights->weights, no_residual == 0);
    for (size_t c = 0; c < mids.size(); ++c) {
      const std::string base = (fs::path(out_dir) / ("mid_cam" + std::to_string(c))).string();
      sf::io::save_ppm(base + ".ppm", mids[c]);
      sf::io::save_png16(base + ".png", mids[c]);
    }
    return SF_OK;
  });
}

sf_status sf_evaluate(const sf_weights* weights, const sf_dataset* data, int no_residual,
                      const char* metrics_jsonl, char* summary_json_buf, size_t buf_len) {
  return guarded([&]() -> sf_status {
    if (!weights || !data) return fail(SF_ERR_INVALID_ARGUMENT, "sf_evaluate: null argument");
    sf::EvalMetrics m = sf::evaluate(data->data, weights->weights, no_residual == 0,
                                     metrics_jsonl ? metrics_jsonl : "");
    nlohmann::json j{{"psnr", std::isinf(m.psnr) ? nlohmann::json("inf") : nlohmann::json(m.psnr)},
                     {"ssim", m.ssim},
                     {"abs_rel", m.abs_rel},
                     {"sq_rel", m.sq_rel},
                     {"rmse", m.rmse},
                     {"mean_consistency_gap", m.mean_consistency_gap},
                     {"count", m.count}};
    if (summary_json_buf) return copy_out(j.dump(), summary_json_buf, buf_len);
    return SF_OK;
  });
}

sf_status sf_default_world_config(char* buf, size_t buf_len) {
  return guarded([&]() -> sf_status {
    return copy_out(sf::world_config_to_json(sf::SyntheticWorldConfig{}), buf, buf_len);
  });
}

sf_status sf_default_train_config(char* buf, size_t buf_len) {
  return guarded([&]() -> sf_status {
    return copy_out(sf::train_config_to_json(sf::TrainConfig{}), buf, buf_len);
  });
}

}  // extern "C"
