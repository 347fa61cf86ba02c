#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sf/gaussians.hpp"
#include "sf/geometry.hpp"
#include "sf/tensor.hpp"

namespace sf {

/// Shared sizing for the three networks. The layer layout itself is a toy
/// stand-in: small channel counts, plain conv blocks, average-pool pyramid.
struct ArchitectureConfig {
  long base_channels = 16;
  int pyramid_levels = 3;
  int num_cameras = 4;
  int sh_degree = 1;
  double d_min = 1.0;
  double d_max = 80.0;
  long height = 64, width = 96;

  void validate() const;
  long channels_at(int level) const;  // base * min(2^level, 4)
  double s_max(double min_focal) const { return 0.5 * d_max / min_focal; }
  bool operator==(const ArchitectureConfig&) const = default;
};

/// Named parameter store. Prefixes partition ownership: "D." depth network,
/// "P." Gaussian parameter network, "R.encoder." the shared flow encoder,
/// "R.dec<i>." the per-camera flow decoders.
struct NetworkWeights {
  ArchitectureConfig config;
  std::map<std::string, Tensor> params;

  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return params.count(name) != 0; }
  long parameter_count() const;
  void set_trainable(bool trainable);
  bool has_residual_net() const;
  /// Names with any of the given prefixes, sorted (the optimizer's parameter
  /// universe).
  std::vector<std::string> names_with_prefix(const std::vector<std::string>& prefixes) const;
};

struct ConvSpec {
  std::string name;
  long cin = 0, cout = 0, k = 3;
  bool zero_init = false;           // flow heads start at exactly zero
  std::vector<double> bias_init;    // per-channel bias, zeros when empty
};

/// The full, deterministic layer listing for a config; init and tests share it.
std::vector<ConvSpec> architecture_specs(const ArchitectureConfig& cfg);

/// Uniform fan-in kernels, handcrafted head biases, all flow-head output
/// layers zero-initialized. Bit-identical for equal seeds.
NetworkWeights init_weights(const ArchitectureConfig& cfg, std::uint64_t seed);

/// Encoder-decoder depth: sigmoid head blended between 1/d_max and 1/d_min in
/// disparity space, so the output range (d_min, d_max) holds for any weights.
DepthMap depth_forward(const NetworkWeights& w, const Tensor& image);

/// Normalized inverse depth in (0,1); the quantity the smoothness loss sees.
Tensor normalized_disparity(const Tensor& depth, const ArchitectureConfig& cfg);

/// Raw per-pixel Gaussian attributes from the image and normalized inverse
/// depth.
RawAttributeMaps gauss_param_forward(const NetworkWeights& w, const Tensor& image,
                                     const DepthMap& depth);

struct ResidualFlowResult {
  FlowField flow;              // full resolution
  std::vector<Tensor> levels;  // levels[i] has shape (2, H/2^i, W/2^i)
};

/// Shared-encoder, per-camera-decoder residual flow with coarse-to-fine
/// refinement: each level upsamples the previous estimate (doubling its
/// magnitude), warps the encoder features by rigid + estimate, and predicts a
/// delta.
ResidualFlowResult residual_flow_forward(const NetworkWeights& w, const Tensor& warped_source,
                                         const Tensor& target, const FlowField& rigid,
                                         int camera_index);

}  // namespace sf
