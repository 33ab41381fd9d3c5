#pragma once

#include <span>
#include <string>

#include "scalseg/pipeline.hpp"
#include "scalseg/training.hpp"

namespace scalseg {

// Line-delimited JSON, one object per scale with the fields
// scale, n_points, encode_ms, fuse_ms, decode_ms, cumulative_ms,
// pipelined_ms, distance_evals (plus n_encoded, arrival_ms,
// pipelined_latency_ms).
std::string timing_records(const TimingReport& report);
std::string timing_table(const TimingReport& report);

std::string complexity_record(const ComplexityEstimate& estimate);

// Same record style as timing_records; fields scale, method, oAcc, mAcc,
// mIoU, cumulative_ms.
std::string metrics_records(std::span<const ScaleEvaluation> rows);
// Columns: Scale | Method | oAcc | mAcc | mIoU | Time (ms). Values in percent.
std::string metrics_table(std::span<const ScaleEvaluation> rows);

}  // namespace scalseg
