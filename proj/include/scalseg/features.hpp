#pragma once

#include <cstdint>
#include <vector>

#include "scalseg/cloud.hpp"
#include "scalseg/layers.hpp"

namespace scalseg {

// Encoder output of one scale: N' rows of F features with their 3D positions.
struct FeatureMatrix {
  std::vector<Vec3> positions;
  Matrix features;
  int scale_id = 0;

  std::size_t rows() const { return positions.size(); }
};

// Work counters accumulated by the network operations.
struct OpCounters {
  std::uint64_t distance_evals = 0;
};

}  // namespace scalseg
