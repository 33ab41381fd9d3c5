#include "scalseg/backbone.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "scalseg/error.hpp"
#include "scalseg/scene.hpp"
#include "test_util.hpp"

namespace scalseg {
namespace {

using testing::random_cloud;

BackboneConfig small_config(int f = 8, int classes = 3) {
  BackboneConfig cfg;
  cfg.feature_dim = f;
  cfg.num_classes = classes;
  cfg.init_seed = 42;
  return cfg;
}

TEST(EncodeTest, SinglePointAttendsToItself) {
  const ScaleModel model = ScaleModel::initialize(1, small_config(), std::nullopt);
  const ScaleInput input{PointCloud({{0.1, 0.2, 0.3}}, {{0.5, 0.5, 0.5}}), 0.16, 1};
  EncoderCache cache;
  const EncoderResult enc = encode(model, input, &cache);
  EXPECT_EQ(enc.features().rows(), 1u);
  for (const auto& ac : cache.attention) {
    ASSERT_EQ(ac.weights.rows(), 1);
    EXPECT_TRUE((ac.weights.array() == 1.0).all());
  }
}

TEST(EncodeTest, RoomShapes) {
  SceneSpec spec;
  spec.num_points = 500;
  spec.num_classes = 3;
  spec.extent = {3.0, 3.0, 2.0};
  const PointCloud cloud = generate_scene(spec);
  BackboneConfig cfg;  // defaults: F = 32
  cfg.num_classes = 3;
  const ScaleModel model = ScaleModel::initialize(1, cfg, std::nullopt);
  const EncoderResult enc = encode(model, {cloud, 0.16, 1});
  const FeatureMatrix fm = enc.features();
  EXPECT_LE(fm.rows(), 500u);
  EXPECT_GE(fm.rows(), 1u);
  EXPECT_EQ(fm.features.rows(), static_cast<Eigen::Index>(fm.rows()));
  EXPECT_EQ(fm.features.cols(), 32);
  ASSERT_EQ(enc.levels.size(), 2u);
  EXPECT_EQ(enc.levels[0].positions.size(), 500u);
}

TEST(EncodeTest, ZeroAttentionMlpGivesUniformWeights) {
  ScaleModel model = ScaleModel::initialize(1, small_config(), std::nullopt);
  for (auto& a : model.mutable_params().attention) {
    a.attn_out.weight.setZero();
    a.attn_out.bias.setZero();
  }
  const ScaleInput input{random_cloud(40, 1, 1.0), 0.1, 1};
  EncoderCache cache;
  encode(model, input, &cache);
  for (const auto& ac : cache.attention) {
    const double k = static_cast<double>(ac.neighbors_per_row);
    EXPECT_TRUE(((ac.weights.array() - 1.0 / k).abs() < 1e-15).all());
  }
}

TEST(EncodeTest, AttentionWeightsSumToOne) {
  const ScaleModel model = ScaleModel::initialize(1, small_config(), std::nullopt);
  const ScaleInput input{random_cloud(300, 2, 2.0), 0.1, 1};
  EncoderCache cache;
  encode(model, input, &cache);
  for (const auto& ac : cache.attention) {
    const auto k = static_cast<Eigen::Index>(ac.neighbors_per_row);
    for (Eigen::Index j = 0; j * k < ac.weights.rows(); ++j) {
      const Eigen::RowVectorXd sums = ac.weights.middleRows(j * k, k).colwise().sum();
      EXPECT_TRUE(((sums.array() - 1.0).abs() < 1e-12).all());
    }
  }
}

TEST(EncodeTest, FewerPointsThanNeighbors) {
  const ScaleModel model = ScaleModel::initialize(1, small_config(), std::nullopt);
  const ScaleInput input{random_cloud(3, 2, 1.0), 0.1, 1};
  EncoderCache cache;
  encode(model, input, &cache);
  EXPECT_EQ(cache.attention[0].neighbors_per_row, 3u);
}

TEST(EncodeTest, InferenceMatchesRecordedPass) {
  // Chunked inference and whole-batch recording must agree exactly.
  const ScaleModel model = ScaleModel::initialize(1, small_config(), std::nullopt);
  const ScaleInput input{random_cloud(2500, 3, 3.0), 0.1, 1};
  EncoderCache cache;
  const EncoderResult a = encode(model, input, &cache);
  const EncoderResult b = encode(model, input);
  EXPECT_EQ(a.features().features, b.features().features);
}

TEST(EncodeTest, RejectsEmptyPartition) {
  const ScaleModel model = ScaleModel::initialize(1, small_config(), std::nullopt);
  EXPECT_THROW(encode(model, {PointCloud{}, 0.1, 1}), InputError);
}

TEST(GridPoolTest, MeansPerVoxel) {
  const std::vector<Vec3> pos{{0.1, 0.1, 0.1}, {0.3, 0.1, 0.1}, {1.5, 0.1, 0.1}};
  const PoolMap map = grid_pool_map(pos, 1.0);
  ASSERT_EQ(map.clusters, 2u);
  EncoderLevel level{pos, Matrix(3, 1)};
  level.features << 1.0, 3.0, 10.0;
  const EncoderLevel pooled = grid_pool(level, map);
  EXPECT_DOUBLE_EQ(pooled.features(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(pooled.positions[0][0], 0.2);
  EXPECT_DOUBLE_EQ(pooled.features(1, 0), 10.0);
}

TEST(InterpolationTest, CoincidentPointDominates) {
  const NeighborIndex src({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}});
  const std::vector<Vec3> targets{{0, 0, 0}};
  const InterpMap map = interpolation_map(src, targets, 3);
  EXPECT_NEAR(map.weights[0], 1.0, 1e-7);
  Matrix feats(3, 2);
  feats << 1, 2, 5, 6, 7, 8;
  const Matrix out = interpolate(feats, map);
  EXPECT_NEAR(out(0, 0), 1.0, 1e-6);
  EXPECT_NEAR(out(0, 1), 2.0, 1e-6);
}

TEST(InterpolationTest, UniformFeaturesAreReproduced) {
  const std::vector<Vec3> pts{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {3, 2, 1}};
  const NeighborIndex src(pts);
  const std::vector<Vec3> targets{{0.3, 0.2, 0.1}, {5, 5, 5}, {1, 0, 0}};
  const InterpMap map = interpolation_map(src, targets, 3);
  const Matrix feats = Matrix::Constant(4, 3, 0.75);
  const Matrix out = interpolate(feats, map);
  EXPECT_TRUE(((out.array() - 0.75).abs() < 1e-15).all());
}

TEST(InterpolationTest, EquidistantPairGivesMean) {
  // d = 1 to both, so both weights are 1/(1 + eps) normalized to 1/2.
  const NeighborIndex src({{-1, 0, 0}, {1, 0, 0}});
  const std::vector<Vec3> targets{{0, 0, 0}};
  const InterpMap map = interpolation_map(src, targets, 2);
  Matrix feats(2, 2);
  feats << 2.0, -4.0, 6.0, 8.0;
  const Matrix out = interpolate(feats, map);
  EXPECT_DOUBLE_EQ(out(0, 0), 4.0);
  EXPECT_DOUBLE_EQ(out(0, 1), 2.0);
}

TEST(DecodeTest, OneRowPerPartitionPoint) {
  const ScaleModel model = ScaleModel::initialize(1, small_config(8, 5), std::nullopt);
  const ScaleInput input{random_cloud(333, 8, 2.0), 0.1, 1};
  const EncoderResult enc = encode(model, input);
  const Prediction pred = decode(model, enc.features(), enc);
  EXPECT_EQ(pred.logits.rows(), 333);
  EXPECT_EQ(pred.logits.cols(), 5);
  EXPECT_EQ(pred.labels, argmax_rows(pred.logits));
}

TEST(DecodeTest, RejectsEmptyOrMismatchedFeatures) {
  const ScaleModel model = ScaleModel::initialize(1, small_config(), std::nullopt);
  const ScaleInput input{random_cloud(20, 8, 1.0), 0.1, 1};
  const EncoderResult enc = encode(model, input);
  FeatureMatrix wrong = enc.features();
  wrong.scale_id = 2;
  EXPECT_THROW(decode(model, wrong, enc), InputError);
  EXPECT_THROW(decode(model, FeatureMatrix{{}, Matrix(0, 8), 1}, enc), InputError);
}

TEST(ArgmaxTest, TiesGoToLowestClass) {
  Matrix logits(2, 3);
  logits << 1, 1, 0, 0, 2, 2;
  EXPECT_EQ(argmax_rows(logits), (std::vector<std::uint16_t>{0, 1}));
}

TEST(BackboneTest, PermutationEquivariance) {
  const ScaleModel model = ScaleModel::initialize(1, small_config(), std::nullopt);
  const PointCloud cloud = random_cloud(150, 12, 1.5);
  std::vector<Index> perm(cloud.size());
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(3);
  std::shuffle(perm.begin(), perm.end(), rng);
  const PointCloud shuffled = gather(cloud, perm);

  const EncoderResult ea = encode(model, {cloud, 0.1, 1});
  const EncoderResult eb = encode(model, {shuffled, 0.1, 1});
  const FeatureMatrix fa = ea.features();
  const FeatureMatrix fb = eb.features();
  ASSERT_EQ(fa.rows(), fb.rows());
  EXPECT_LT((fa.features - fb.features).cwiseAbs().maxCoeff(), 1e-12);

  const Prediction pa = decode(model, fa, ea);
  const Prediction pb = decode(model, fb, eb);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    EXPECT_LT((pb.logits.row(r) - pa.logits.row(perm[i])).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(BackwardTest, RequiresRecordedForward) {
  const ScaleModel model = ScaleModel::initialize(1, small_config(), std::nullopt);
  EXPECT_THROW(backward(model, Tape{}, Matrix::Zero(1, 3)), InvariantError);
}

TEST(BackwardTest, FrozenModelYieldsNoGradients) {
  ScaleModel model = ScaleModel::initialize(1, small_config(), std::nullopt);
  model.freeze();
  Tape tape;
  const Prediction pred = forward(model, {random_cloud(10, 1, 1.0), 0.1, 1}, nullptr, false, &tape);
  EXPECT_FALSE(backward(model, tape, Matrix::Ones(pred.logits.rows(), 3)).has_value());
  EXPECT_THROW(model.mutable_params(), InvariantError);
}

TEST(BackwardTest, ZeroUpstreamGradientGivesZeroGradients) {
  const ScaleModel model = ScaleModel::initialize(1, small_config(), std::nullopt);
  Tape tape;
  const Prediction pred = forward(model, {random_cloud(30, 1, 1.0), 0.1, 1}, nullptr, false, &tape);
  const auto g = backward(model, tape, Matrix::Zero(pred.logits.rows(), 3));
  ASSERT_TRUE(g.has_value());
  g->for_each([](const std::string& name, const Matrix& m) {
    EXPECT_TRUE(m.isZero(0.0)) << name;
  });
}

TEST(ModelTest, InitializationIsSeeded) {
  const auto a = ScaleModel::initialize(2, small_config(), FusionConfig{8, 8});
  const auto b = ScaleModel::initialize(2, small_config(), FusionConfig{8, 8});
  EXPECT_EQ(a, b);
  BackboneConfig other = small_config();
  other.init_seed = 43;
  EXPECT_NE(a.params(), ScaleModel::initialize(2, other, FusionConfig{8, 8}).params());
  EXPECT_FALSE(ScaleModel::initialize(1, small_config(), FusionConfig{8, 8}).has_fusion());
  EXPECT_THROW(ScaleModel::initialize(2, small_config(), FusionConfig{8, 4}), ConfigError);
}

TEST(ModelTest, ConfigValidation) {
  BackboneConfig cfg;
  cfg.feature_dim = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.attention_neighbors = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.encoder_stages = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

}  // namespace
}  // namespace scalseg
