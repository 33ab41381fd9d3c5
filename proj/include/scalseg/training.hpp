#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "scalseg/backbone.hpp"
#include "scalseg/cloud.hpp"
#include "scalseg/metrics.hpp"

namespace scalseg {

struct TrainConfig {
  int epochs = 34;
  int batch_size = 4;  // scenes per update
  double learning_rate = 0.01;
  double momentum = 0.9;
  // Rescales the batch gradient to this global L2 norm when larger; 0 = off.
  double grad_clip = 0.0;
  std::uint64_t rng_seed = 0;
  bool use_fusion = true;

  void validate() const;
};

// One room: a labeled cloud and its resolution partitions.
struct LabeledScene {
  PointCloud cloud;
  PartitionSet parts;
};

struct TrainReport {
  int scale_id = 0;
  std::vector<double> epoch_loss;  // mean per-point cross-entropy
};

// Mean softmax cross-entropy over rows. When `d_logits` is non-null it
// receives dLoss/dlogits multiplied by `grad_scale` (pass 1/rows for the mean).
double softmax_cross_entropy(const Matrix& logits,
                             std::span<const std::uint16_t> labels,
                             Matrix* d_logits = nullptr, double grad_scale = 0.0);

// Momentum descent on models[scale_id - 1] with the loss computed on that
// scale's predictions only. Every lower scale must already be frozen and is
// only run forward. The trained scale is left unfrozen.
// Throws InvariantError for unfrozen lower scales or a frozen target and
// InputError for unlabeled scenes.
TrainReport train_scale(std::vector<ScaleModel>& models, int scale_id,
                        std::span<const LabeledScene> scenes,
                        const TrainConfig& cfg);

// Trains scales 1..models.size() in order, freezing each one afterwards.
std::vector<TrainReport> train_all_scales(std::vector<ScaleModel>& models,
                                          std::span<const LabeledScene> scenes,
                                          const TrainConfig& cfg);

struct ScaleEvaluation {
  int scale = 0;
  bool fusion = true;
  ConfusionMatrix confusion{1};
  SegmentationMetrics metrics;
  double cumulative_ms = 0.0;  // mean over scenes
};

// Per-scale metrics over all scenes. With fusion disabled every scale decodes
// directly from its own encoder features.
std::vector<ScaleEvaluation> evaluate(std::span<const ScaleModel> models,
                                      std::span<const LabeledScene> scenes,
                                      bool fusion_enabled);

}  // namespace scalseg
