#pragma once

#include "sf/dataset.hpp"

namespace sf {

/// Ray-casts a procedurally textured room with static boxes and moving
/// objects into a short trajectory of two-frame samples with analytic depth,
/// flow, visibility, and mid-frame ground truth. Deterministic per seed.
std::vector<SceneSample> generate_scene(const SyntheticWorldConfig& world, std::uint64_t seed);

/// The camera rig at a given time (frame units), without any scene content.
std::vector<PinholeCamera> rig_at_time(const SyntheticWorldConfig& world, double time);

}  // namespace sf
