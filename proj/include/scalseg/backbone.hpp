#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "scalseg/cloud.hpp"
#include "scalseg/features.hpp"
#include "scalseg/fusion.hpp"
#include "scalseg/layers.hpp"
#include "scalseg/neighbor_index.hpp"

namespace scalseg {

// Per-scale network shape. Nonlinearity is the rectifier; weights are
// initialized Uniform(+-1/sqrt(fan_in)) from init_seed.
struct BackboneConfig {
  int feature_dim = 32;
  int attention_neighbors = 8;
  // Stage 0 attends over the partition itself; stage t >= 1 first grid-pools
  // at base_voxel * downsample_factor^t.
  int encoder_stages = 2;
  double downsample_factor = 2.0;
  int num_classes = 13;
  int interp_neighbors = 3;
  SearchStrategy knn = SearchStrategy::kKdTree;
  std::uint64_t init_seed = 0;

  void validate() const;
  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

inline constexpr int kInputChannels = 6;  // xyz + rgb
inline constexpr double kInterpEpsilon = 1e-8;

struct AttentionParams {
  Dense query, key, value;
  Dense pos_hidden, pos_out;    // relative-position encoding MLP
  Dense attn_hidden, attn_out;  // attention-weight MLP
  friend bool operator==(const AttentionParams&, const AttentionParams&) = default;
};

struct DecoderStageParams {
  Dense up;    // interpolated coarse features
  Dense skip;  // encoder features of the finer level
  friend bool operator==(const DecoderStageParams&, const DecoderStageParams&) = default;
};

struct ScaleParams {
  Dense embed;
  std::vector<AttentionParams> attention;  // one per encoder stage
  std::vector<DecoderStageParams> decoder;  // encoder_stages - 1
  Dense head_hidden, head_out;
  std::optional<FusionParams> fusion;

  // Visits every tensor as (name, matrix) in a fixed order.
  void for_each(const std::function<void(const std::string&, Matrix&)>& fn);
  void for_each(
      const std::function<void(const std::string&, const Matrix&)>& fn) const;
  ScaleParams zeros_like() const;
  std::size_t parameter_count() const;

  friend bool operator==(const ScaleParams&, const ScaleParams&) = default;
};

// Weights of one scale plus its frozen flag. Scale 1 never has fusion weights.
class ScaleModel {
 public:
  ScaleModel() = default;
  // Fresh weights. `fusion` is ignored for scale 1.
  static ScaleModel initialize(int scale_id, const BackboneConfig& backbone,
                               std::optional<FusionConfig> fusion);
  // Assembles a model from stored parts; throws ConfigError on shape mismatch.
  static ScaleModel from_parts(int scale_id, const BackboneConfig& backbone,
                               std::optional<FusionConfig> fusion,
                               ScaleParams params, bool frozen);

  int scale_id() const { return scale_id_; }
  const BackboneConfig& backbone() const { return backbone_; }
  const std::optional<FusionConfig>& fusion_config() const { return fusion_; }
  bool has_fusion() const { return fusion_.has_value(); }
  const ScaleParams& params() const { return params_; }
  bool frozen() const { return frozen_; }

  // Throws InvariantError when frozen.
  ScaleParams& mutable_params();
  void freeze() { frozen_ = true; }

  friend bool operator==(const ScaleModel&, const ScaleModel&) = default;

 private:
  int scale_id_ = 1;
  BackboneConfig backbone_;
  std::optional<FusionConfig> fusion_;
  ScaleParams params_;
  bool frozen_ = false;
};

// One partition ready for a scale network.
struct ScaleInput {
  PointCloud cloud;
  double base_voxel = 0.0;
  int scale_id = 1;
};

struct Prediction {
  Matrix logits;                     // N_i x num_classes
  std::vector<std::uint16_t> labels;  // row-wise argmax, ties -> lowest class
};

// Output of every encoder stage; levels[0] sits on the partition points.
struct EncoderLevel {
  std::vector<Vec3> positions;
  Matrix features;
};

struct EncoderResult {
  std::vector<EncoderLevel> levels;
  int scale_id = 0;

  FeatureMatrix features() const;
};

struct AttentionCache {
  std::size_t neighbors_per_row = 0;
  std::vector<Index> neighbors;
  Matrix input, query, key, value;
  Matrix rel_pos, pos_hidden, combined, attn_hidden, weights;
};

struct PoolMap {
  std::vector<Index> cluster;  // input row -> pooled row
  std::vector<double> inv_count;
  std::size_t clusters = 0;
};

struct EncoderCache {
  Matrix input;
  Matrix embedded;
  std::vector<PoolMap> pools;  // pools[t - 1] feeds stage t
  std::vector<AttentionCache> attention;
};

struct InterpMap {
  std::size_t neighbors_per_row = 0;
  std::vector<Index> ids;
  std::vector<double> weights;
};

struct DecoderCache {
  std::vector<InterpMap> interp;  // indexed like ScaleParams::decoder
  std::vector<Matrix> interpolated, skip_input, stage_output;
  Matrix head_input, head_hidden;
};

// Everything backward() needs from one recorded forward pass of a scale.
struct Tape {
  EncoderCache encoder;
  std::optional<FusionCache> fusion;
  DecoderCache decoder;
  const FeatureStore* store = nullptr;
  bool recorded = false;
};

PoolMap grid_pool_map(std::span<const Vec3> positions, double voxel_size);
EncoderLevel grid_pool(const EncoderLevel& level, const PoolMap& map);

// Normalized 1/(d + eps) weights from `source` to every target position.
InterpMap interpolation_map(const NeighborIndex& source,
                            std::span<const Vec3> targets, std::size_t k);
Matrix interpolate(const Matrix& source_features, const InterpMap& map);

// Vector attention over the k nearest neighbors (self included):
// out_j = x_j + sum_n softmax_n(MLP_a(q_j - k_n + d_jn)) * v_n with
// d_jn = MLP_p(p_j - p_n), softmax taken per channel.
Matrix attention_forward(const AttentionParams& params,
                         std::span<const Vec3> positions, const Matrix& x,
                         std::size_t k, SearchStrategy strategy,
                         AttentionCache* cache = nullptr,
                         OpCounters* counters = nullptr);
Matrix attention_backward(const AttentionParams& params,
                          const AttentionCache& cache, const Matrix& d_out,
                          AttentionParams& grad);

// Throws InputError on an empty partition.
EncoderResult encode(const ScaleModel& model, const ScaleInput& input,
                     EncoderCache* cache = nullptr,
                     OpCounters* counters = nullptr);

// Throws InputError on empty features or a scale mismatch.
Prediction decode(const ScaleModel& model, const FeatureMatrix& fused,
                  const EncoderResult& encoded, DecoderCache* cache = nullptr,
                  OpCounters* counters = nullptr);

// encode -> fuse (when the model has fusion weights, `use_fusion` is set and
// the store is non-empty) -> decode. Records into `tape` when given.
Prediction forward(const ScaleModel& model, const ScaleInput& input,
                   const FeatureStore* store, bool use_fusion,
                   Tape* tape = nullptr, OpCounters* counters = nullptr,
                   FeatureMatrix* fused_out = nullptr);

// Exact gradients of all parameters given dL/dlogits. nullopt for a frozen
// model; throws InvariantError if the tape holds no forward pass.
std::optional<ScaleParams> backward(const ScaleModel& model, const Tape& tape,
                                    const Matrix& d_logits);

std::vector<std::uint16_t> argmax_rows(const Matrix& logits);

}  // namespace scalseg
