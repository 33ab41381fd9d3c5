#pragma once

#include <random>
#include <vector>

#include "scalseg/features.hpp"
#include "scalseg/layers.hpp"
#include "scalseg/neighbor_index.hpp"

namespace scalseg {

struct FusionConfig {
  int k_fuse = 8;
  int feature_dim = 32;

  void validate() const;
  friend bool operator==(const FusionConfig&, const FusionConfig&) = default;
};

// Trainable part of the fusion block.
struct FusionParams {
  Dense pointwise;  // F -> F, shared over neighbors (width-1 convolution)
  Dense combine;    // 2F -> F

  explicit FusionParams(int feature_dim = 1)
      : pointwise(feature_dim, feature_dim),
        combine(2 * feature_dim, feature_dim) {}

  friend bool operator==(const FusionParams&, const FusionParams&) = default;
};

// Running concatenation of the (fused) encoder features of earlier scales,
// ordered by scale and then by row.
class FeatureStore {
 public:
  bool empty() const { return positions_.empty(); }
  std::size_t rows() const { return positions_.size(); }
  int feature_dim() const { return static_cast<int>(features_.cols()); }

  const std::vector<Vec3>& positions() const { return positions_; }
  const Matrix& features() const { return features_; }
  const std::vector<int>& row_scales() const { return row_scales_; }
  // Distinct scale ids, ascending.
  const std::vector<int>& scale_ids() const { return scale_ids_; }

  // Throws InvariantError unless fused.scale_id exceeds every stored id, and
  // InputError on a feature-width mismatch.
  void append(const FeatureMatrix& fused);

 private:
  std::vector<Vec3> positions_;
  Matrix features_;
  std::vector<int> row_scales_;
  std::vector<int> scale_ids_;
};

FeatureStore extend_store(FeatureStore store, const FeatureMatrix& fused);

// Activations recorded by fuse() for the backward pass.
struct FusionCache {
  std::size_t neighbors_per_row = 0;
  std::vector<Index> neighbor_rows;  // rows x neighbors_per_row store rows
  std::vector<Index> argmax_rows;    // rows x F: store row that won the max
  Matrix concat;                     // rows x 2F
};

// For every current row: KNN over the store positions, the shared pointwise
// map on each neighbor feature, channelwise max over the neighbors,
// concatenation with the current feature and a linear 2F -> F map. Positions
// are copied from `current` unchanged.
FeatureMatrix fuse(const FeatureStore& store, const FeatureMatrix& current,
                   const FusionParams& params, const FusionConfig& cfg,
                   SearchStrategy strategy = SearchStrategy::kKdTree,
                   FusionCache* cache = nullptr,
                   OpCounters* counters = nullptr);

// Accumulates parameter gradients into `grad` and returns dL/d(current
// features). Store features are constants.
Matrix fuse_backward(const FeatureStore& store, const FusionParams& params,
                     const FusionCache& cache, const Matrix& d_out,
                     FusionParams& grad);

void init_fusion_params(FusionParams& params, std::mt19937_64& rng);

}  // namespace scalseg
