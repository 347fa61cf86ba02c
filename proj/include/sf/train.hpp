#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sf/dataset.hpp"
#include "sf/losses.hpp"
#include "sf/nets.hpp"

namespace sf {

struct AdamConfig {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct TrainConfig {
  int stage = 1;
  int epochs = 6;
  double learning_rate = 1e-4;
  int batch_size = 1;  // one surround-view sample per step
  std::uint64_t seed = 0;
  LossWeights loss;
  AdamConfig adam;
  bool no_warp_loss = false;               // sets the warp weight to zero
  bool midframe_render_supervision = false;
  bool stage1_render_both_times = true;
  ArchitectureConfig arch;
  std::string run_log_path;  // render-stats log, one line per render; empty = off
};

// JSON <-> config; unknown keys are rejected, missing keys keep defaults.
TrainConfig train_config_from_json(const std::string& text);
std::string config_hash(const TrainConfig& cfg);
std::string train_config_to_json(const TrainConfig& cfg);
SyntheticWorldConfig world_config_from_json(const std::string& text);
std::string world_config_to_json(const SyntheticWorldConfig& cfg);

/// Adam with bias correction; state is keyed by parameter name so steps are
/// deterministic for a fixed parameter universe.
class Adam {
 public:
  Adam(double lr, const AdamConfig& cfg) : lr_(lr), cfg_(cfg) {}
  /// Applies one update to every named parameter that accumulated a gradient,
  /// then clears all gradients in the universe.
  void step(NetworkWeights& w, const std::vector<std::string>& names);

 private:
  double lr_;
  AdamConfig cfg_;
  long t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

struct StepRecord {
  int epoch = 0;
  int step = 0;  // global step index
  LossBreakdown losses;
};

struct TrainResult {
  NetworkWeights weights;
  std::vector<StepRecord> history;
};

/// Stage 1: depth and Gaussian parameter networks only, self-supervised by
/// reprojection, smoothness, and static rendering.
TrainResult train_stage1(const Dataset& data, const TrainConfig& cfg);

/// Stage 2: freezes the stage-1 networks (asserted every step) and trains the
/// residual flow network on warped-image, consistency, and displaced-render
/// losses.
TrainResult train_stage2(const Dataset& data, const NetworkWeights& stage1, const TrainConfig& cfg);

/// Ablation: every objective active from scratch, all networks trained jointly.
TrainResult train_single_stage(const Dataset& data, const TrainConfig& cfg);

void save_weights(const std::string& path, const NetworkWeights& w,
                  const std::map<std::string, std::string>& manifest);
NetworkWeights load_weights(const std::string& path,
                            std::map<std::string, std::string>* manifest = nullptr);

/// Evaluates the stage-2 objective on one sample without stepping anything.
/// With use_residual=false the total flow degenerates to the rigid flow: the
/// frozen static model's score.
LossBreakdown stage2_objective(const SceneSample& sample, const NetworkWeights& w,
                               const TrainConfig& cfg, bool use_residual);

}  // namespace sf
