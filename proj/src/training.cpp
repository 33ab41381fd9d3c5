#include "scalseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "scalseg/error.hpp"
#include "scalseg/pipeline.hpp"

namespace scalseg {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("train: learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("train: momentum must be in [0, 1)");
  }
  if (!(grad_clip >= 0.0)) throw ConfigError("train: grad_clip must be >= 0");
}

double softmax_cross_entropy(const Matrix& logits,
                             std::span<const std::uint16_t> labels,
                             Matrix* d_logits, double grad_scale) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size()) {
    throw InputError("cross entropy: logits/labels row mismatch");
  }
  if (d_logits) d_logits->resize(logits.rows(), logits.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double peak = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - peak).exp();
    const double z = e.sum();
    const auto y = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)]);
    if (y >= logits.cols()) throw InputError("cross entropy: label out of range");
    loss += std::log(z) - (logits(i, y) - peak);
    if (d_logits) {
      d_logits->row(i) = e / z;
      (*d_logits)(i, y) -= 1.0;
      d_logits->row(i) *= grad_scale;
    }
  }
  return logits.rows() > 0 ? loss / static_cast<double>(logits.rows()) : 0.0;
}

TrainReport train_scale(std::vector<ScaleModel>& models, int scale_id,
                        std::span<const LabeledScene> scenes,
                        const TrainConfig& cfg) {
  cfg.validate();
  if (scale_id < 1 || scale_id > static_cast<int>(models.size())) {
    throw InputError("train: no model for scale " + std::to_string(scale_id));
  }
  const auto target = static_cast<std::size_t>(scale_id - 1);
  for (std::size_t i = 0; i < target; ++i) {
    if (!models[i].frozen()) {
      throw InvariantError("train: lower scale " + std::to_string(i + 1) +
                           " is not frozen");
    }
  }
  ScaleModel& model = models[target];
  if (model.frozen()) {
    throw InvariantError("train: scale " + std::to_string(scale_id) + " is frozen");
  }
  if (scenes.empty()) throw InputError("train: no scenes");

  // Inputs and lower-scale feature stores are constant during training.
  std::vector<ScaleInput> inputs;
  std::vector<FeatureStore> stores;
  for (const auto& scene : scenes) {
    if (!scene.cloud.has_labels()) throw InputError("train: scene without labels");
    if (scene.parts.num_scales() < models.size()) {
      throw InputError("train: scene has fewer partitions than models");
    }
    std::vector<ScaleInput> all = make_scale_inputs(scene.cloud, scene.parts);
    stores.push_back(build_store(std::span<const ScaleModel>(models).first(target + 1),
                                 std::span<const ScaleInput>(all).first(target + 1),
                                 scale_id, cfg.use_fusion));
    inputs.push_back(std::move(all[target]));
  }

  ScaleParams velocity = model.params().zeros_like();
  std::mt19937_64 rng(mix64(cfg.rng_seed ^ mix64(static_cast<std::uint64_t>(scale_id))));
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainReport report;
  report.scale_id = scale_id;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t epoch_points = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      std::size_t batch_points = 0;
      for (std::size_t b = b0; b < b1; ++b) batch_points += inputs[order[b]].cloud.size();
      if (batch_points == 0) continue;

      ScaleParams grad = model.params().zeros_like();
      for (std::size_t b = b0; b < b1; ++b) {
        const std::size_t sc = order[b];
        Tape tape;
        const Prediction pred = forward(model, inputs[sc], &stores[sc], cfg.use_fusion, &tape);
        Matrix d_logits;
        const double loss = softmax_cross_entropy(
            pred.logits, inputs[sc].cloud.labels(), &d_logits,
            1.0 / static_cast<double>(batch_points));
        epoch_loss += loss * static_cast<double>(inputs[sc].cloud.size());
        const auto g = backward(model, tape, d_logits);
        std::vector<Matrix*> dst;
        grad.for_each([&](const std::string&, Matrix& m) { dst.push_back(&m); });
        std::size_t i = 0;
        g->for_each([&](const std::string&, const Matrix& m) { *dst[i++] += m; });
      }
      epoch_points += batch_points;

      if (cfg.grad_clip > 0.0) {
        double sq = 0.0;
        grad.for_each([&](const std::string&, const Matrix& m) { sq += m.squaredNorm(); });
        const double norm = std::sqrt(sq);
        if (norm > cfg.grad_clip) {
          const double scale = cfg.grad_clip / norm;
          grad.for_each([&](const std::string&, Matrix& m) { m *= scale; });
        }
      }

      std::vector<Matrix*> vel;
      std::vector<const Matrix*> gr;
      velocity.for_each([&](const std::string&, Matrix& m) { vel.push_back(&m); });
      grad.for_each([&](const std::string&, const Matrix& m) { gr.push_back(&m); });
      std::size_t i = 0;
      model.mutable_params().for_each([&](const std::string&, Matrix& w) {
        *vel[i] = cfg.momentum * *vel[i] - cfg.learning_rate * *gr[i];
        w += *vel[i];
        ++i;
      });
    }
    report.epoch_loss.push_back(epoch_points ? epoch_loss / static_cast<double>(epoch_points) : 0.0);
  }
  return report;
}

std::vector<TrainReport> train_all_scales(std::vector<ScaleModel>& models,
                                          std::span<const LabeledScene> scenes,
                                          const TrainConfig& cfg) {
  std::vector<TrainReport> reports;
  for (std::size_t i = 0; i < models.size(); ++i) {
    reports.push_back(train_scale(models, static_cast<int>(i + 1), scenes, cfg));
    models[i].freeze();
  }
  return reports;
}

std::vector<ScaleEvaluation> evaluate(std::span<const ScaleModel> models,
                                      std::span<const LabeledScene> scenes,
                                      bool fusion_enabled) {
  if (models.empty()) throw InputError("evaluate: no models");
  const int classes = models.front().backbone().num_classes;
  std::vector<ScaleEvaluation> rows(models.size());
  for (std::size_t i = 0; i < models.size(); ++i) {
    rows[i].scale = static_cast<int>(i + 1);
    rows[i].fusion = fusion_enabled;
    rows[i].confusion = ConfusionMatrix(classes);
  }
  PipelineConfig cfg;
  cfg.fusion_enabled = fusion_enabled;
  cfg.threaded = false;
  for (const auto& scene : scenes) {
    if (!scene.cloud.has_labels()) throw InputError("evaluate: scene without labels");
    if (scene.parts.num_scales() < models.size()) {
      throw InputError("evaluate: scene has " + std::to_string(scene.parts.num_scales()) +
                       " partitions for " + std::to_string(models.size()) + " models");
    }
    PartitionSet parts = scene.parts;
    parts.partitions.resize(models.size());
    parts.voxel_sizes.resize(models.size());
    const std::vector<ScaleInput> inputs = make_scale_inputs(scene.cloud, parts);
    const PipelineResult result = run_pipeline(models, inputs, cfg);
    for (std::size_t i = 0; i < models.size(); ++i) {
      rows[i].confusion.add(inputs[i].cloud.labels(), result.predictions[i].labels);
      rows[i].cumulative_ms += result.report.scales[i].cumulative_ms /
                               static_cast<double>(scenes.size());
    }
  }
  for (auto& row : rows) {
    if (row.confusion.total() > 0) row.metrics = compute_metrics(row.confusion);
  }
  return rows;
}

}  // namespace scalseg
