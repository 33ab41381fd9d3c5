#include "scalseg/training.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "scalseg/checkpoint.hpp"
#include "scalseg/error.hpp"
#include "scalseg/scene.hpp"
#include "test_util.hpp"

namespace scalseg {
namespace {

std::vector<LabeledScene> toy_scenes(int count, std::size_t points, std::uint64_t seed) {
  std::vector<LabeledScene> scenes;
  for (int i = 0; i < count; ++i) {
    SceneSpec spec;
    spec.num_points = points;
    spec.num_classes = 3;
    spec.num_objects = 2;
    spec.extent = {2.0, 2.0, 1.5};
    spec.rng_seed = seed + static_cast<std::uint64_t>(i);
    PointCloud cloud = generate_scene(spec);
    PartitionConfig pc;
    pc.voxel_sizes = {0.3, 0.2, 0.15, 0.1};
    pc.rng_seed = spec.rng_seed;
    PartitionSet parts = build_partitions(cloud, pc);
    scenes.push_back({std::move(cloud), std::move(parts)});
  }
  return scenes;
}

std::vector<ScaleModel> toy_models(int scales) {
  BackboneConfig bc;
  bc.feature_dim = 8;
  bc.num_classes = 3;
  bc.init_seed = 5;
  std::vector<ScaleModel> models;
  for (int i = 1; i <= scales; ++i) {
    models.push_back(ScaleModel::initialize(i, bc, FusionConfig{4, 8}));
  }
  return models;
}

TEST(CrossEntropyTest, UniformLogitsGiveLogClasses) {
  for (int c : {2, 3, 13}) {
    const Matrix logits = Matrix::Constant(5, c, 0.7);
    const std::vector<std::uint16_t> labels{0, 1, 1, 0, 1};
    EXPECT_DOUBLE_EQ(softmax_cross_entropy(logits, labels), std::log(static_cast<double>(c)));
  }
}

TEST(CrossEntropyTest, GradientIsSoftmaxMinusOneHot) {
  Matrix logits(1, 3);
  logits << 1.0, 2.0, 0.5;
  const std::vector<std::uint16_t> labels{1};
  Matrix d;
  softmax_cross_entropy(logits, labels, &d, 1.0);
  const Eigen::RowVectorXd e = logits.row(0).array().exp();
  const Eigen::RowVectorXd p = e / e.sum();
  EXPECT_NEAR(d(0, 0), p(0), 1e-15);
  EXPECT_NEAR(d(0, 1), p(1) - 1.0, 1e-15);
  EXPECT_NEAR(d.sum(), 0.0, 1e-15);
}

TEST(TrainTest, LossDecreasesOnScaleOne) {
  const auto scenes = toy_scenes(2, 1500, 1);
  auto models = toy_models(1);
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch_size = 1;
  cfg.learning_rate = 0.05;
  const TrainReport r = train_scale(models, 1, scenes, cfg);
  ASSERT_EQ(r.epoch_loss.size(), 8u);
  EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
  for (std::size_t e = 1; e < r.epoch_loss.size(); ++e) {
    EXPECT_LT(r.epoch_loss[e], r.epoch_loss[e - 1] * 1.05) << "epoch " << e;
  }
}

TEST(TrainTest, LowerScalesStayBitIdentical) {
  const auto scenes = toy_scenes(1, 1200, 2);
  auto models = toy_models(4);
  TrainConfig cfg;
  cfg.epochs = 1;
  for (int i = 1; i <= 4; ++i) {
    std::vector<std::uint64_t> before;
    for (int j = 0; j < i - 1; ++j) before.push_back(checkpoint_checksum(models[j]));
    train_scale(models, i, scenes, cfg);
    for (int j = 0; j < i - 1; ++j) {
      EXPECT_EQ(checkpoint_checksum(models[j]), before[static_cast<std::size_t>(j)]);
    }
    models[i - 1].freeze();
  }
}

TEST(TrainTest, ZeroLearningRateLeavesParameters) {
  const auto scenes = toy_scenes(1, 800, 3);
  auto models = toy_models(2);
  models[0].freeze();
  const ScaleModel before = models[1];
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.learning_rate = 0.0;
  train_scale(models, 2, scenes, cfg);
  EXPECT_EQ(models[1].params(), before.params());
}

TEST(TrainTest, TrainAllScalesFreezesEach) {
  const auto scenes = toy_scenes(1, 800, 4);
  auto models = toy_models(2);
  TrainConfig cfg;
  cfg.epochs = 1;
  const auto reports = train_all_scales(models, scenes, cfg);
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_TRUE(models[0].frozen());
  EXPECT_TRUE(models[1].frozen());
}

TEST(TrainTest, RejectsBadPreconditions) {
  const auto scenes = toy_scenes(1, 600, 5);
  auto models = toy_models(2);
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(train_scale(models, 2, scenes, cfg), InvariantError);
  models[0].freeze();
  EXPECT_THROW(train_scale(models, 1, scenes, cfg), InvariantError);

  std::vector<LabeledScene> unlabeled{{testing::random_cloud(300, 1, 2.0), {}}};
  PartitionConfig pc;
  pc.voxel_sizes = {0.3, 0.2, 0.15, 0.1};
  unlabeled[0].parts = build_partitions(unlabeled[0].cloud, pc);
  EXPECT_THROW(train_scale(models, 2, unlabeled, cfg), InputError);

  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(EvaluateTest, ScaleOneUnaffectedByFusionSwitch) {
  const auto scenes = toy_scenes(2, 1000, 6);
  auto models = toy_models(3);
  for (auto& m : models) m.freeze();
  const auto on = evaluate(models, scenes, true);
  const auto off = evaluate(models, scenes, false);
  ASSERT_EQ(on.size(), 3u);
  EXPECT_EQ(on[0].confusion.count(0, 0), off[0].confusion.count(0, 0));
  EXPECT_EQ(on[0].metrics.mean_iou, off[0].metrics.mean_iou);
  EXPECT_TRUE(on[1].fusion);
  EXPECT_FALSE(off[1].fusion);
  EXPECT_EQ(on[2].scale, 3);
}

}  // namespace
}  // namespace scalseg
