#pragma once

#include <cstdint>

#include "scalseg/cloud.hpp"

namespace scalseg {

// Synthetic labeled room: a floor (class 0), four walls (class 1, only when
// num_classes >= 3) and axis-aligned boxes whose classes cycle through the
// remaining ids. Points are spread over the surfaces proportionally to area.
struct SceneSpec {
  Vec3 extent{6.0, 6.0, 3.0};  // room spans [0, extent] on every axis
  int num_objects = 6;
  int num_classes = 13;
  std::size_t num_points = 100000;
  double noise_sigma = 0.005;  // meters
  double color_noise = 0.05;
  std::uint64_t rng_seed = 0;

  // Throws ConfigError.
  void validate() const;
};

// Deterministic per seed; colors are multiples of 1/255.
PointCloud generate_scene(const SceneSpec& spec);

}  // namespace scalseg
