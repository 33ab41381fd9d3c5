// Command-line front end: scene generation, partitioning, training,
// inference, benchmarking and evaluation.
#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scalseg/checkpoint.hpp"
#include "scalseg/cloud_io.hpp"
#include "scalseg/config.hpp"
#include "scalseg/error.hpp"
#include "scalseg/pipeline.hpp"
#include "scalseg/report.hpp"
#include "scalseg/scene.hpp"
#include "scalseg/training.hpp"

namespace fs = std::filesystem;
using namespace scalseg;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitConfig = 3;
constexpr int kExitInvariant = 4;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig load_run_config(const Globals& g) {
  RunConfig cfg = g.config_path.empty() ? RunConfig{} : load_config(g.config_path);
  if (g.seed) cfg.apply_seed(*g.seed);
  cfg.validate();
  return cfg;
}

fs::path checkpoint_path(const fs::path& dir, int scale) {
  return dir / ("scale_" + std::to_string(scale) + ".ckpt");
}

std::vector<ScaleModel> load_models(const fs::path& dir, int scales) {
  std::vector<ScaleModel> models;
  for (int i = 1; i <= scales; ++i) models.push_back(load_checkpoint(checkpoint_path(dir, i)));
  return models;
}

std::vector<ScaleModel> fresh_models(const RunConfig& cfg) {
  std::vector<ScaleModel> models;
  const int scales = static_cast<int>(cfg.partition.voxel_sizes.size());
  for (int i = 1; i <= scales; ++i) {
    models.push_back(ScaleModel::initialize(i, cfg.backbone, cfg.fusion_for_models()));
    models.back().freeze();
  }
  return models;
}

std::vector<LabeledScene> load_scenes(const std::vector<std::string>& paths,
                                      const PartitionConfig& pc) {
  std::vector<LabeledScene> scenes;
  for (const auto& p : paths) {
    PointCloud cloud = read_cloud(p);
    if (!cloud.has_labels()) throw InputError(p + ": cloud has no labels");
    PartitionSet parts = build_partitions(cloud, pc);
    scenes.push_back({std::move(cloud), std::move(parts)});
  }
  return scenes;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? comma : comma - start);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw InputError("bad list element '" + item + "'");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(out);
  if (!f) throw InputError("cannot write " + out);
  f << text;
}

int cmd_generate(const Globals& g, std::size_t points, int classes, int objects,
                 const std::string& extent, bool ascii) {
  if (g.out.empty()) throw InputError("generate: --out is required");
  SceneSpec spec;
  spec.num_points = points;
  spec.num_classes = classes;
  spec.num_objects = objects;
  spec.rng_seed = g.seed.value_or(0);
  if (!extent.empty()) {
    const auto e = parse_list(extent);
    if (e.size() != 3) throw InputError("--extent needs three values");
    spec.extent = {e[0], e[1], e[2]};
  }
  const PointCloud cloud = generate_scene(spec);
  const CloudFormat format = ascii ? CloudFormat::kAscii : format_for_path(g.out);
  write_cloud(cloud, g.out, format);
  std::cerr << "wrote " << cloud.size() << " points to " << g.out << "\n";
  return 0;
}

int cmd_partition(const Globals& g, const std::string& input) {
  const RunConfig cfg = load_run_config(g);
  const PointCloud cloud = read_cloud(input);
  const PartitionSet parts = build_partitions(cloud, cfg.partition);
  if (!g.out.empty()) fs::create_directories(g.out);
  std::string records;
  for (std::size_t i = 0; i < parts.num_scales(); ++i) {
    const auto& part = parts.partitions[i];
    nlohmann::ordered_json j;
    j["scale"] = i + 1;
    j["voxel_size"] = parts.voxel_sizes[i];
    j["points"] = part.size();
    records += j.dump() + "\n";
    if (!g.out.empty()) {
      const fs::path file = fs::path(g.out) / ("partition_" + std::to_string(i + 1) + ".rspc");
      write_cloud(gather(cloud, part), file, CloudFormat::kBinary);
    }
  }
  std::cout << records;
  return 0;
}

int cmd_train(const Globals& g, const std::vector<std::string>& inputs) {
  const RunConfig cfg = load_run_config(g);
  const fs::path dir = g.out.empty() ? fs::path("models") : fs::path(g.out);
  const auto scenes = load_scenes(inputs, cfg.partition);
  std::vector<ScaleModel> models;
  const int scales = static_cast<int>(cfg.partition.voxel_sizes.size());
  for (int i = 1; i <= scales; ++i) {
    models.push_back(ScaleModel::initialize(i, cfg.backbone, cfg.fusion_for_models()));
  }
  fs::create_directories(dir);
  TrainConfig tc = cfg.train;
  tc.use_fusion = cfg.fusion_enabled;
  for (int i = 1; i <= scales; ++i) {
    const TrainReport r = train_scale(models, i, scenes, tc);
    models[static_cast<std::size_t>(i - 1)].freeze();
    save_checkpoint(models[static_cast<std::size_t>(i - 1)], checkpoint_path(dir, i));
    for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) {
      nlohmann::ordered_json j;
      j["scale"] = i;
      j["epoch"] = e + 1;
      j["loss"] = r.epoch_loss[e];
      std::cout << j.dump() << "\n";
    }
  }
  std::cerr << "saved " << scales << " checkpoints to " << dir.string() << "\n";
  return 0;
}

int cmd_infer(const Globals& g, const std::string& input, const std::string& model_dir,
              const std::string& arrivals, bool table) {
  const RunConfig cfg = load_run_config(g);
  const PointCloud cloud = read_cloud(input);
  const PartitionSet parts = build_partitions(cloud, cfg.partition);
  const auto models = load_models(model_dir, static_cast<int>(parts.num_scales()));
  PipelineConfig pc;
  pc.fusion_enabled = cfg.fusion_enabled;
  if (!arrivals.empty()) pc.arrival_ms = parse_list(arrivals);
  const PipelineResult r = run_pipeline(models, cloud, parts, pc);
  std::cout << (table ? timing_table(r.report) : timing_records(r.report));
  if (!g.out.empty()) {
    std::vector<Index> order;
    for (const auto& p : parts.partitions) order.insert(order.end(), p.begin(), p.end());
    const PointCloud selected = gather(cloud, order);
    const PointCloud labeled(selected.positions(), selected.colors(), r.labels(),
                             models.front().backbone().num_classes);
    write_cloud(labeled, g.out, format_for_path(g.out));
  }
  return 0;
}

int cmd_bench(const Globals& g, const std::string& input, const std::string& model_dir,
              const std::string& knn, bool table) {
  RunConfig cfg = load_run_config(g);
  if (knn == "linear") cfg.backbone.knn = SearchStrategy::kLinearScan;
  else if (knn == "kdtree") cfg.backbone.knn = SearchStrategy::kKdTree;
  else if (!knn.empty()) throw ConfigError("--knn must be kdtree or linear");
  const PointCloud cloud = read_cloud(input);
  const PartitionSet parts = build_partitions(cloud, cfg.partition);
  std::vector<ScaleModel> models =
      model_dir.empty() ? fresh_models(cfg) : load_models(model_dir, static_cast<int>(parts.num_scales()));
  if (!knn.empty() && !model_dir.empty()) {
    for (auto& m : models) {
      BackboneConfig b = m.backbone();
      b.knn = cfg.backbone.knn;
      m = ScaleModel::from_parts(m.scale_id(), b, m.fusion_config(), m.params(), true);
    }
  }
  PipelineConfig pc;
  pc.fusion_enabled = cfg.fusion_enabled;
  pc.warmup_runs = 1;
  const PipelineResult r = run_pipeline(models, cloud, parts, pc);
  const BaselineResult b = run_baseline(models.front(), cloud, parts, parts.num_scales());

  std::vector<std::uint64_t> sizes;
  for (std::size_t s : parts.sizes()) sizes.push_back(s);
  const ComplexityEstimate est = estimate_gain(sizes);
  const double measured = static_cast<double>(r.report.total_distance_evals()) /
                          static_cast<double>(b.distance_evals);

  nlohmann::ordered_json base;
  base["baseline_points"] = b.n_points;
  base["baseline_ms"] = b.wall_ms;
  base["baseline_distance_evals"] = b.distance_evals;
  base["scalable_total_ms"] = r.report.total_ms();
  base["scalable_first_ms"] = r.report.time_to_first_ms();
  base["scalable_distance_evals"] = r.report.total_distance_evals();
  base["measured_ratio"] = measured;
  base["predicted_ratio"] = est.scalable_fraction();
  std::cout << (table ? timing_table(r.report) : timing_records(r.report));
  std::cout << base.dump() << "\n" << complexity_record(est);
  return 0;
}

int cmd_eval(const Globals& g, const std::vector<std::string>& inputs,
             const std::string& model_dir, bool no_fusion, bool table) {
  const RunConfig cfg = load_run_config(g);
  const auto scenes = load_scenes(inputs, cfg.partition);
  const auto models = load_models(model_dir, static_cast<int>(cfg.partition.voxel_sizes.size()));
  const auto rows = evaluate(models, scenes, !no_fusion && cfg.fusion_enabled);
  emit(table ? metrics_table(rows) : metrics_records(rows), g.out);
  return 0;
}

int cmd_gain(const Globals& g, const std::string& sizes_text) {
  std::vector<std::uint64_t> sizes;
  for (double v : parse_list(sizes_text)) {
    if (v < 0 || v != static_cast<double>(static_cast<std::uint64_t>(v))) {
      throw InputError("sizes must be non-negative integers");
    }
    sizes.push_back(static_cast<std::uint64_t>(v));
  }
  emit(complexity_record(estimate_gain(sizes)), g.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-resolution point cloud segmentation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "key = value configuration file");
  app.add_option("--seed", g.seed, "Seed for partitioning, initialization and training");
  app.add_option("--out", g.out, "Output file or directory");

  std::size_t points = 100000;
  int classes = 13;
  int objects = 6;
  std::string extent;
  bool ascii = false;
  auto* generate = app.add_subcommand("generate", "Write a synthetic labeled room");
  generate->add_option("--points", points, "Number of points");
  generate->add_option("--classes", classes, "Number of classes");
  generate->add_option("--objects", objects, "Number of boxes");
  generate->add_option("--extent", extent, "Room size x,y,z in meters");
  generate->add_flag("--ascii", ascii, "Write the text format");

  std::string input;
  auto* partition = app.add_subcommand("partition", "Split a cloud into resolution partitions");
  partition->add_option("cloud", input, "Input cloud")->required();

  std::vector<std::string> inputs;
  auto* train = app.add_subcommand("train", "Train every scale in order");
  train->add_option("clouds", inputs, "Labeled clouds")->required();

  std::string model_dir;
  std::string arrivals;
  bool table = false;
  auto* infer = app.add_subcommand("infer", "Run the scale pipeline");
  infer->add_option("cloud", input, "Input cloud")->required();
  infer->add_option("--models", model_dir, "Checkpoint directory")->required();
  infer->add_option("--arrival-times", arrivals, "Per-scale arrival times in ms, t1,t2,...");
  infer->add_flag("--table", table, "Print a table instead of records");

  std::string knn;
  auto* bench = app.add_subcommand("bench", "Compare the scale pipeline with one full pass");
  bench->add_option("cloud", input, "Input cloud")->required();
  bench->add_option("--models", model_dir, "Checkpoint directory (default: untrained)");
  bench->add_option("--knn", knn, "Neighbor search: kdtree or linear");
  bench->add_flag("--table", table, "Print a table instead of records");

  bool no_fusion = false;
  auto* eval = app.add_subcommand("eval", "Per-scale segmentation metrics");
  eval->add_option("clouds", inputs, "Labeled clouds")->required();
  eval->add_option("--models", model_dir, "Checkpoint directory")->required();
  eval->add_flag("--no-fusion", no_fusion, "Decode every scale from its own features");
  eval->add_flag("--table", table, "Print a table instead of records");

  std::string sizes;
  auto* gain = app.add_subcommand("gain", "Pairwise work removed by partitioning");
  gain->add_option("--sizes", sizes, "Partition sizes N1,N2,...")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (*generate) return cmd_generate(g, points, classes, objects, extent, ascii);
    if (*partition) return cmd_partition(g, input);
    if (*train) return cmd_train(g, inputs);
    if (*infer) return cmd_infer(g, input, model_dir, arrivals, table);
    if (*bench) return cmd_bench(g, input, model_dir, knn, table);
    if (*eval) return cmd_eval(g, inputs, model_dir, no_fusion, table);
    if (*gain) return cmd_gain(g, sizes);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const InvariantError& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInvariant;
  }
  return 0;
}
