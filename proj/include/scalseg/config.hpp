#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>

#include "scalseg/backbone.hpp"
#include "scalseg/cloud.hpp"
#include "scalseg/fusion.hpp"
#include "scalseg/training.hpp"

namespace scalseg {

// Everything the command-line tool can configure. Loaded from plain-text
// "key = value" files; '#' starts a comment.
//
//   voxel_sizes, partition_seed,
//   feature_dim, attention_neighbors, encoder_stages, downsample_factor,
//   num_classes, interp_neighbors, knn (kdtree|linear), init_seed,
//   k_fuse, fusion (true|false),
//   epochs, batch_size, learning_rate, momentum, grad_clip, train_seed
struct RunConfig {
  PartitionConfig partition;
  BackboneConfig backbone;
  FusionConfig fusion;
  TrainConfig train;
  bool fusion_enabled = true;

  // Throws ConfigError.
  void validate() const;
  // Seeds partitioning, initialization and training from one value.
  void apply_seed(std::uint64_t seed);
  std::optional<FusionConfig> fusion_for_models() const;
};

// Throws ConfigError naming the offending line.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace scalseg
