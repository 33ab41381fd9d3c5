#pragma once

#include <cstdint>
#include <span>
#include <thread>
#include <vector>

#include "scalseg/backbone.hpp"
#include "scalseg/cloud.hpp"
#include "scalseg/fusion.hpp"

namespace scalseg {

struct PipelineConfig {
  bool fusion_enabled = true;
  // Encoders run concurrently; fusion is serialized on the feature store and
  // decoders overlap later encoders. Results are identical to sequential.
  // Off on single-core machines, where overlap distorts per-stage timings.
  bool threaded = std::thread::hardware_concurrency() > 1;
  // Per-scale arrival times in ms; empty means all data present at t = 0.
  std::vector<double> arrival_ms;
  // Untimed full runs before the measured one.
  int warmup_runs = 0;
};

struct ScaleTiming {
  int scale = 0;
  std::size_t n_points = 0;   // N_i
  std::size_t n_encoded = 0;  // N'_i
  double encode_ms = 0.0;
  double fuse_ms = 0.0;
  double decode_ms = 0.0;
  double arrival_ms = 0.0;
  // Completion with all data present at t = 0 and scales run back to back.
  double cumulative_ms = 0.0;
  // Completion when scale i starts at max(arrival_i, previous completion).
  double pipelined_ms = 0.0;
  // pipelined_ms - arrival_ms: latency once the scale's data is complete.
  double pipelined_latency_ms = 0.0;
  std::uint64_t distance_evals = 0;

  double processing_ms() const { return encode_ms + fuse_ms + decode_ms; }
};

struct TimingReport {
  std::vector<ScaleTiming> scales;

  double time_to_first_ms() const;
  double total_ms() const;
  std::uint64_t total_distance_evals() const;
};

struct LatencyBounds {
  std::vector<double> cumulative;
  std::vector<double> pipelined_completion;
  std::vector<double> pipelined_latency;
};

// Upper and lower latency bounds from per-scale processing durations.
// `arrivals` may be empty (all zero); otherwise it must be non-decreasing,
// non-negative and as long as `durations`. Throws InputError.
LatencyBounds latency_bounds(std::span<const double> durations,
                             std::span<const double> arrivals);

struct PipelineResult {
  std::vector<Prediction> predictions;  // Y_1 ... Y_s
  TimingReport report;

  // Labels of Y_1 ... Y_s concatenated in partition order.
  std::vector<std::uint16_t> labels() const;
};

std::vector<ScaleInput> make_scale_inputs(const PointCloud& cloud,
                                          const PartitionSet& parts);

// Feature store produced by scales 1 .. upto (exclusive upper scale id).
FeatureStore build_store(std::span<const ScaleModel> models,
                         std::span<const ScaleInput> inputs, int upto,
                         bool fusion_enabled);

// Throws InputError on a model/scale mismatch or bad arrival times.
PipelineResult run_pipeline(std::span<const ScaleModel> models,
                            std::span<const ScaleInput> inputs,
                            const PipelineConfig& cfg = {});
PipelineResult run_pipeline(std::span<const ScaleModel> models,
                            const PointCloud& cloud, const PartitionSet& parts,
                            const PipelineConfig& cfg = {});

struct BaselineResult {
  Prediction prediction;
  std::size_t n_points = 0;
  double wall_ms = 0.0;
  std::uint64_t distance_evals = 0;
};

// One non-scalable pass over the union of partitions 1 .. upto_scale (in
// partition order) at the finest included voxel size.
BaselineResult run_baseline(const ScaleModel& model, const PointCloud& cloud,
                            const PartitionSet& parts, int upto_scale);

struct ComplexityEstimate {
  std::vector<std::uint64_t> sizes;
  std::uint64_t total = 0;          // N
  std::uint64_t whole_cost = 0;     // N^2
  std::uint64_t scalable_cost = 0;  // sum N_i^2
  std::uint64_t gain = 0;           // sum over k != p of N_k N_p

  double scalable_fraction() const;
  double gain_fraction() const;
};

// Exact integer evaluation. Throws InputError on an empty list, a zero size,
// or 64-bit overflow.
ComplexityEstimate estimate_gain(std::span<const std::uint64_t> sizes);

}  // namespace scalseg
