#include "scalseg/report.hpp"

#include <cstdio>

#include <nlohmann/json.hpp>

namespace scalseg {
namespace {

std::string line(const char* fmt, auto... args) {
  char buf[256];
  const int n = std::snprintf(buf, sizeof(buf), fmt, args...);
  return std::string(buf, static_cast<std::size_t>(n));
}

const char* method_name(bool fusion) { return fusion ? "Fusion" : "Without Fusion"; }

}  // namespace

std::string timing_records(const TimingReport& report) {
  std::string out;
  for (const auto& t : report.scales) {
    nlohmann::ordered_json j;
    j["scale"] = t.scale;
    j["n_points"] = t.n_points;
    j["n_encoded"] = t.n_encoded;
    j["encode_ms"] = t.encode_ms;
    j["fuse_ms"] = t.fuse_ms;
    j["decode_ms"] = t.decode_ms;
    j["arrival_ms"] = t.arrival_ms;
    j["cumulative_ms"] = t.cumulative_ms;
    j["pipelined_ms"] = t.pipelined_ms;
    j["pipelined_latency_ms"] = t.pipelined_latency_ms;
    j["distance_evals"] = t.distance_evals;
    out += j.dump() + "\n";
  }
  return out;
}

std::string timing_table(const TimingReport& report) {
  std::string out = line("%-5s %9s %9s %10s %9s %10s %11s %11s %9s %14s\n", "scale", "points",
                         "encoded", "encode_ms", "fuse_ms", "decode_ms", "cumul_ms",
                         "pipe_ms", "latency", "distance_evals");
  for (const auto& t : report.scales) {
    out += line("%-5d %9zu %9zu %10.2f %9.2f %10.2f %11.2f %11.2f %9.2f %14llu\n", t.scale,
                t.n_points, t.n_encoded, t.encode_ms, t.fuse_ms, t.decode_ms, t.cumulative_ms,
                t.pipelined_ms, t.pipelined_latency_ms,
                static_cast<unsigned long long>(t.distance_evals));
  }
  return out;
}

std::string complexity_record(const ComplexityEstimate& e) {
  nlohmann::ordered_json j;
  j["sizes"] = e.sizes;
  j["total"] = e.total;
  j["whole_cost"] = e.whole_cost;
  j["scalable_cost"] = e.scalable_cost;
  j["gain"] = e.gain;
  j["gain_fraction"] = e.gain_fraction();
  return j.dump() + "\n";
}

std::string metrics_records(std::span<const ScaleEvaluation> rows) {
  std::string out;
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["scale"] = r.scale;
    j["method"] = method_name(r.fusion);
    j["oAcc"] = r.metrics.overall_accuracy;
    j["mAcc"] = r.metrics.mean_accuracy;
    j["mIoU"] = r.metrics.mean_iou;
    j["cumulative_ms"] = r.cumulative_ms;
    out += j.dump() + "\n";
  }
  return out;
}

std::string metrics_table(std::span<const ScaleEvaluation> rows) {
  std::string out = line("%-6s %-15s %7s %7s %7s %10s\n", "Scale", "Method", "oAcc", "mAcc",
                         "mIoU", "Time (ms)");
  for (const auto& r : rows) {
    out += line("%-6d %-15s %7.1f %7.1f %7.1f %10.1f\n", r.scale, method_name(r.fusion),
                100.0 * r.metrics.overall_accuracy, 100.0 * r.metrics.mean_accuracy,
                100.0 * r.metrics.mean_iou, r.cumulative_ms);
  }
  return out;
}

}  // namespace scalseg
