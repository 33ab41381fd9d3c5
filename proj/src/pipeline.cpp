#include "scalseg/pipeline.hpp"

#include <chrono>
#include <future>
#include <limits>
#include <string>

#include "scalseg/error.hpp"

namespace scalseg {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

struct EncodeOutcome {
  EncoderResult encoded;
  double ms = 0.0;
  std::uint64_t evals = 0;
};

struct DecodeOutcome {
  Prediction prediction;
  double ms = 0.0;
  std::uint64_t evals = 0;
};

EncodeOutcome timed_encode(const ScaleModel& model, const ScaleInput& input) {
  OpCounters counters;
  const auto start = Clock::now();
  EncodeOutcome out{encode(model, input, nullptr, &counters)};
  out.ms = elapsed_ms(start);
  out.evals = counters.distance_evals;
  return out;
}

DecodeOutcome timed_decode(const ScaleModel& model, const FeatureMatrix& fused,
                           const EncoderResult& encoded) {
  OpCounters counters;
  const auto start = Clock::now();
  DecodeOutcome out{decode(model, fused, encoded, nullptr, &counters)};
  out.ms = elapsed_ms(start);
  out.evals = counters.distance_evals;
  return out;
}

void check_models(std::span<const ScaleModel> models,
                  std::span<const ScaleInput> inputs) {
  if (models.size() != inputs.size()) {
    throw InputError("pipeline: " + std::to_string(models.size()) +
                     " models for " + std::to_string(inputs.size()) + " scales");
  }
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i].scale_id() != static_cast<int>(i + 1) ||
        inputs[i].scale_id != static_cast<int>(i + 1)) {
      throw InputError("pipeline: model/scale order mismatch at scale " +
                       std::to_string(i + 1));
    }
  }
}

bool fuses(const ScaleModel& model, bool fusion_enabled, std::size_t scale_index) {
  return fusion_enabled && scale_index > 0 && model.has_fusion();
}

PipelineResult run_once(std::span<const ScaleModel> models,
                        std::span<const ScaleInput> inputs,
                        const PipelineConfig& cfg) {
  const std::size_t s = models.size();
  std::vector<EncodeOutcome> encoded(s);
  std::vector<DecodeOutcome> decoded(s);
  std::vector<double> fuse_ms(s, 0.0);
  std::vector<std::uint64_t> fuse_evals(s, 0);
  std::vector<std::size_t> n_encoded(s, 0);
  FeatureStore store;

  auto fuse_step = [&](std::size_t i) -> FeatureMatrix {
    FeatureMatrix alpha = encoded[i].encoded.features();
    n_encoded[i] = alpha.rows();
    FeatureMatrix fused = alpha;
    if (fuses(models[i], cfg.fusion_enabled, i)) {
      OpCounters counters;
      const auto start = Clock::now();
      fused = fuse(store, alpha, *models[i].params().fusion,
                   *models[i].fusion_config(), models[i].backbone().knn,
                   nullptr, &counters);
      fuse_ms[i] = elapsed_ms(start);
      fuse_evals[i] = counters.distance_evals;
    }
    if (cfg.fusion_enabled && i + 1 < s) store.append(fused);
    return fused;
  };

  if (cfg.threaded) {
    std::vector<std::future<EncodeOutcome>> enc_jobs;
    for (std::size_t i = 0; i < s; ++i) {
      enc_jobs.push_back(std::async(std::launch::async, timed_encode,
                                    std::cref(models[i]), std::cref(inputs[i])));
    }
    std::vector<FeatureMatrix> fused(s);
    std::vector<std::future<DecodeOutcome>> dec_jobs;
    for (std::size_t i = 0; i < s; ++i) {
      encoded[i] = enc_jobs[i].get();
      fused[i] = fuse_step(i);
      dec_jobs.push_back(std::async(std::launch::async, timed_decode,
                                    std::cref(models[i]), std::cref(fused[i]),
                                    std::cref(encoded[i].encoded)));
    }
    for (std::size_t i = 0; i < s; ++i) decoded[i] = dec_jobs[i].get();
  } else {
    for (std::size_t i = 0; i < s; ++i) {
      encoded[i] = timed_encode(models[i], inputs[i]);
      const FeatureMatrix fused = fuse_step(i);
      decoded[i] = timed_decode(models[i], fused, encoded[i].encoded);
    }
  }

  PipelineResult result;
  std::vector<double> durations(s);
  for (std::size_t i = 0; i < s; ++i) {
    ScaleTiming t;
    t.scale = static_cast<int>(i + 1);
    t.n_points = inputs[i].cloud.size();
    t.n_encoded = n_encoded[i];
    t.encode_ms = encoded[i].ms;
    t.fuse_ms = fuse_ms[i];
    t.decode_ms = decoded[i].ms;
    t.distance_evals = encoded[i].evals + fuse_evals[i] + decoded[i].evals;
    durations[i] = t.processing_ms();
    result.report.scales.push_back(t);
    result.predictions.push_back(std::move(decoded[i].prediction));
  }
  const LatencyBounds bounds = latency_bounds(durations, cfg.arrival_ms);
  for (std::size_t i = 0; i < s; ++i) {
    ScaleTiming& t = result.report.scales[i];
    t.arrival_ms = cfg.arrival_ms.empty() ? 0.0 : cfg.arrival_ms[i];
    t.cumulative_ms = bounds.cumulative[i];
    t.pipelined_ms = bounds.pipelined_completion[i];
    t.pipelined_latency_ms = bounds.pipelined_latency[i];
  }
  return result;
}

}  // namespace

double TimingReport::time_to_first_ms() const {
  return scales.empty() ? 0.0 : scales.front().cumulative_ms;
}

double TimingReport::total_ms() const {
  return scales.empty() ? 0.0 : scales.back().cumulative_ms;
}

std::uint64_t TimingReport::total_distance_evals() const {
  std::uint64_t n = 0;
  for (const auto& t : scales) n += t.distance_evals;
  return n;
}

LatencyBounds latency_bounds(std::span<const double> durations,
                             std::span<const double> arrivals) {
  if (!arrivals.empty() && arrivals.size() != durations.size()) {
    throw InputError("arrival times: expected " +
                     std::to_string(durations.size()) + " values, got " +
                     std::to_string(arrivals.size()));
  }
  for (std::size_t i = 0; i < arrivals.size(); ++i) {
    if (!(arrivals[i] >= 0.0)) {
      throw InputError("arrival times must be non-negative");
    }
    if (i > 0 && arrivals[i] < arrivals[i - 1]) {
      throw InputError("arrival times must be non-decreasing");
    }
  }
  LatencyBounds b;
  double cumulative = 0.0;
  double finish = 0.0;
  double latency = 0.0;
  double prev_arrival = 0.0;
  for (std::size_t i = 0; i < durations.size(); ++i) {
    const double arrival = arrivals.empty() ? 0.0 : arrivals[i];
    cumulative += durations[i];
    finish = std::max(arrival, finish) + durations[i];
    // Backlog from the previous scale plus this scale's work; exact bound in
    // floating point, unlike (finish - arrival).
    latency = std::max(0.0, latency - (arrival - prev_arrival)) + durations[i];
    prev_arrival = arrival;
    b.cumulative.push_back(cumulative);
    b.pipelined_completion.push_back(finish);
    b.pipelined_latency.push_back(latency);
  }
  return b;
}

std::vector<std::uint16_t> PipelineResult::labels() const {
  std::vector<std::uint16_t> out;
  for (const auto& p : predictions) {
    out.insert(out.end(), p.labels.begin(), p.labels.end());
  }
  return out;
}

std::vector<ScaleInput> make_scale_inputs(const PointCloud& cloud,
                                          const PartitionSet& parts) {
  if (parts.source_point_count != cloud.size()) {
    throw InputError("partition set does not belong to this cloud");
  }
  std::vector<ScaleInput> inputs;
  for (std::size_t i = 0; i < parts.num_scales(); ++i) {
    inputs.push_back({gather(cloud, parts.partitions[i]), parts.voxel_sizes[i],
                      static_cast<int>(i + 1)});
  }
  return inputs;
}

FeatureStore build_store(std::span<const ScaleModel> models,
                         std::span<const ScaleInput> inputs, int upto,
                         bool fusion_enabled) {
  FeatureStore store;
  for (int i = 0; i + 1 < upto; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const EncoderResult enc = encode(models[idx], inputs[idx]);
    FeatureMatrix fused = enc.features();
    if (fuses(models[idx], fusion_enabled, idx)) {
      fused = fuse(store, fused, *models[idx].params().fusion,
                   *models[idx].fusion_config(), models[idx].backbone().knn);
    }
    store.append(fused);
  }
  return store;
}

PipelineResult run_pipeline(std::span<const ScaleModel> models,
                            std::span<const ScaleInput> inputs,
                            const PipelineConfig& cfg) {
  check_models(models, inputs);
  if (!cfg.arrival_ms.empty()) {
    // Validate before doing any work.
    latency_bounds(std::vector<double>(inputs.size(), 0.0), cfg.arrival_ms);
  }
  for (int w = 0; w < cfg.warmup_runs; ++w) run_once(models, inputs, cfg);
  return run_once(models, inputs, cfg);
}

PipelineResult run_pipeline(std::span<const ScaleModel> models,
                            const PointCloud& cloud, const PartitionSet& parts,
                            const PipelineConfig& cfg) {
  const std::vector<ScaleInput> inputs = make_scale_inputs(cloud, parts);
  return run_pipeline(models, inputs, cfg);
}

BaselineResult run_baseline(const ScaleModel& model, const PointCloud& cloud,
                            const PartitionSet& parts, int upto_scale) {
  if (upto_scale < 1 || upto_scale > static_cast<int>(parts.num_scales())) {
    throw InputError("baseline: upto_scale out of range");
  }
  std::vector<Index> merged;
  for (int i = 0; i < upto_scale; ++i) {
    const auto& p = parts.partitions[static_cast<std::size_t>(i)];
    merged.insert(merged.end(), p.begin(), p.end());
  }
  const ScaleInput input{gather(cloud, merged),
                         parts.voxel_sizes[static_cast<std::size_t>(upto_scale - 1)],
                         model.scale_id()};
  BaselineResult out;
  out.n_points = merged.size();
  OpCounters counters;
  const auto start = Clock::now();
  out.prediction = forward(model, input, nullptr, false, nullptr, &counters);
  out.wall_ms = elapsed_ms(start);
  out.distance_evals = counters.distance_evals;
  return out;
}

double ComplexityEstimate::scalable_fraction() const {
  return whole_cost == 0 ? 0.0
                         : static_cast<double>(scalable_cost) /
                               static_cast<double>(whole_cost);
}

double ComplexityEstimate::gain_fraction() const {
  return whole_cost == 0
             ? 0.0
             : static_cast<double>(gain) / static_cast<double>(whole_cost);
}

ComplexityEstimate estimate_gain(std::span<const std::uint64_t> sizes) {
  if (sizes.empty()) throw InputError("estimate_gain: empty size list");
  using Wide = unsigned __int128;
  constexpr Wide kMax = std::numeric_limits<std::uint64_t>::max();
  Wide total = 0;
  Wide squares = 0;
  for (std::uint64_t n : sizes) {
    if (n == 0) throw InputError("estimate_gain: sizes must be positive");
    total += n;
    squares += static_cast<Wide>(n) * n;
  }
  if (total > kMax || total * total > kMax) {
    throw InputError("estimate_gain: 64-bit overflow");
  }
  // Cross terms over ordered pairs k != p, accumulated independently of N^2.
  Wide cross = 0;
  Wide prefix = 0;
  for (std::uint64_t n : sizes) {
    cross += 2 * prefix * n;
    prefix += n;
  }
  ComplexityEstimate e;
  e.sizes.assign(sizes.begin(), sizes.end());
  e.total = static_cast<std::uint64_t>(total);
  e.whole_cost = static_cast<std::uint64_t>(total * total);
  e.scalable_cost = static_cast<std::uint64_t>(squares);
  e.gain = static_cast<std::uint64_t>(cross);
  return e;
}

}  // namespace scalseg
