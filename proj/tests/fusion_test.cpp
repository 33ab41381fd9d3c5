#include "scalseg/fusion.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "scalseg/error.hpp"

namespace scalseg {
namespace {

FeatureMatrix random_features(std::size_t rows, int f, int scale_id, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  FeatureMatrix fm{std::vector<Vec3>(rows), Matrix(static_cast<Eigen::Index>(rows), f), scale_id};
  for (auto& p : fm.positions) p = {u(rng), u(rng), u(rng)};
  for (Eigen::Index i = 0; i < fm.features.size(); ++i) fm.features.data()[i] = u(rng);
  return fm;
}

FusionParams random_params(int f, std::uint64_t seed) {
  FusionParams p(f);
  std::mt19937_64 rng(seed);
  init_fusion_params(p, rng);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (Eigen::Index i = 0; i < p.pointwise.bias.size(); ++i) p.pointwise.bias.data()[i] = u(rng);
  for (Eigen::Index i = 0; i < p.combine.bias.size(); ++i) p.combine.bias.data()[i] = u(rng);
  return p;
}

// Pointwise map = identity; combine = [a * I | b * I].
FusionParams blend_params(int f, double a, double b) {
  FusionParams p(f);
  p.pointwise.weight = Matrix::Identity(f, f);
  p.pointwise.bias.setZero();
  p.combine.weight = Matrix::Zero(f, 2 * f);
  p.combine.weight.leftCols(f) = a * Matrix::Identity(f, f);
  p.combine.weight.rightCols(f) = b * Matrix::Identity(f, f);
  p.combine.bias.setZero();
  return p;
}

FeatureStore store_of(const FeatureMatrix& fm) { return extend_store(FeatureStore{}, fm); }

TEST(FusionTest, ZeroCombineGivesZeroFeatures) {
  const int f = 5;
  const FeatureStore store = store_of(random_features(20, f, 1, 1));
  const FeatureMatrix cur = random_features(15, f, 2, 2);
  FusionParams p = random_params(f, 3);
  p.combine.weight.setZero();
  p.combine.bias.setZero();
  const FeatureMatrix out = fuse(store, cur, p, {4, f});
  EXPECT_TRUE(out.features.isZero(0.0));
  EXPECT_EQ(out.positions, cur.positions);
  EXPECT_EQ(out.scale_id, 2);
}

TEST(FusionTest, SingleNeighborAveragesWithCurrent) {
  const int f = 3;
  FeatureMatrix prev{{{0.5, 0.5, 0.5}, {3, 3, 3}}, Matrix(2, f), 1};
  prev.features << 1.0, -2.0, 4.0, 100, 100, 100;
  FeatureMatrix cur{{{0.5, 0.5, 0.5}}, Matrix(1, f), 2};
  cur.features << 3.0, 6.0, -1.0;
  const FeatureMatrix out = fuse(store_of(prev), cur, blend_params(f, 0.5, 0.5), {1, f});
  const Eigen::RowVectorXd expected = (prev.features.row(0) + cur.features.row(0)) / 2.0;
  EXPECT_LT((out.features.row(0) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FusionTest, IdentityReductionReturnsCurrentFeatures) {
  const int f = 6;
  const FeatureStore store = store_of(random_features(40, f, 1, 4));
  const FeatureMatrix cur = random_features(25, f, 2, 5);
  for (int k : {1, 3, 8, 100}) {
    const FeatureMatrix out = fuse(store, cur, blend_params(f, 0.0, 1.0), {k, f});
    EXPECT_EQ(out.features, cur.features);
    EXPECT_EQ(out.positions, cur.positions);
  }
}

TEST(FusionTest, MatchesBruteForceReference) {
  const int f = 4;
  const FeatureMatrix prev = random_features(3, f, 1, 6);
  const FeatureMatrix cur = random_features(7, f, 2, 7);
  const FusionParams p = random_params(f, 8);
  const FeatureMatrix out = fuse(store_of(prev), cur, p, {3, f});

  for (Eigen::Index j = 0; j < cur.features.rows(); ++j) {
    Eigen::RowVectorXd pooled = Eigen::RowVectorXd::Constant(f, -1e300);
    for (Eigen::Index n = 0; n < 3; ++n) {
      for (int o = 0; o < f; ++o) {
        double v = p.pointwise.bias(0, o);
        for (int i = 0; i < f; ++i) v += p.pointwise.weight(o, i) * prev.features(n, i);
        pooled(o) = std::max(pooled(o), v);
      }
    }
    for (int o = 0; o < f; ++o) {
      double v = p.combine.bias(0, o);
      for (int i = 0; i < f; ++i) {
        v += p.combine.weight(o, i) * pooled(i) + p.combine.weight(o, f + i) * cur.features(j, i);
      }
      EXPECT_NEAR(out.features(j, o), v, 1e-12);
    }
  }
}

TEST(FusionTest, StoreRowShuffleIsBitIdentical) {
  const int f = 5;
  const FeatureMatrix prev = random_features(200, f, 1, 9);
  const FeatureMatrix cur = random_features(50, f, 2, 10);
  const FusionParams p = random_params(f, 11);

  std::vector<std::size_t> perm(prev.rows());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(12);
  std::shuffle(perm.begin(), perm.end(), rng);
  FeatureMatrix shuffled = prev;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    shuffled.positions[i] = prev.positions[perm[i]];
    shuffled.features.row(static_cast<Eigen::Index>(i)) =
        prev.features.row(static_cast<Eigen::Index>(perm[i]));
  }
  for (int k : {1, 4, 8}) {
    const FeatureMatrix a = fuse(store_of(prev), cur, p, {k, f});
    const FeatureMatrix b = fuse(store_of(shuffled), cur, p, {k, f}, SearchStrategy::kLinearScan);
    EXPECT_EQ(a.features, b.features) << "k=" << k;
  }
}

TEST(FusionTest, ShapeContract) {
  const int f = 3;
  const FusionParams p = random_params(f, 13);
  for (std::size_t store_rows : {1u, 2u, 9u, 60u}) {
    for (int k : {1, 2, 8}) {
      const FeatureMatrix cur = random_features(11, f, 2, store_rows + 100);
      FusionCache cache;
      const FeatureMatrix out =
          fuse(store_of(random_features(store_rows, f, 1, store_rows)), cur, p, {k, f},
               SearchStrategy::kKdTree, &cache);
      EXPECT_EQ(out.features.rows(), 11);
      EXPECT_EQ(out.features.cols(), f);
      EXPECT_EQ(out.positions, cur.positions);
      EXPECT_EQ(cache.neighbors_per_row, std::min<std::size_t>(k, store_rows));
    }
  }
}

TEST(FusionTest, RejectsEmptyStoreAndWidthMismatch) {
  const FusionParams p = random_params(4, 1);
  const FeatureMatrix cur = random_features(3, 4, 2, 1);
  EXPECT_THROW(fuse(FeatureStore{}, cur, p, {2, 4}), InvariantError);
  EXPECT_THROW(fuse(store_of(random_features(3, 5, 1, 2)), cur, p, {2, 4}), InputError);
  EXPECT_THROW(FusionConfig({0, 4}).validate(), ConfigError);
}

TEST(FeatureStoreTest, AppendsInScaleOrder) {
  const FeatureMatrix a1 = random_features(7, 4, 1, 1);
  const FeatureMatrix a2 = random_features(5, 4, 2, 2);
  FeatureStore store = extend_store(FeatureStore{}, a1);
  EXPECT_EQ(store.rows(), 7u);
  EXPECT_EQ(store.features(), a1.features);
  store = extend_store(store, a2);
  EXPECT_EQ(store.rows(), 12u);
  EXPECT_EQ(store.features().bottomRows(5), a2.features);
  EXPECT_EQ(store.scale_ids(), (std::vector<int>{1, 2}));
  EXPECT_EQ(store.row_scales().front(), 1);
  EXPECT_EQ(store.row_scales().back(), 2);
  EXPECT_THROW(extend_store(store, a2), InvariantError);
  EXPECT_THROW(extend_store(store, a1), InvariantError);
  EXPECT_THROW(extend_store(store, random_features(2, 3, 3, 3)), InputError);
}

TEST(FusionBackwardTest, MatchesFiniteDifferences) {
  const int f = 3;
  const FeatureStore store = store_of(random_features(12, f, 1, 20));
  FeatureMatrix cur = random_features(6, f, 2, 21);
  FusionParams p = random_params(f, 22);
  const FusionConfig cfg{4, f};
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix probe(6, f);
  for (Eigen::Index i = 0; i < probe.size(); ++i) probe.data()[i] = n(rng);
  auto loss = [&] { return fuse(store, cur, p, cfg).features.cwiseProduct(probe).sum(); };

  FusionCache cache;
  fuse(store, cur, p, cfg, SearchStrategy::kKdTree, &cache);
  FusionParams grad(f);
  grad.pointwise.weight.setZero();
  grad.pointwise.bias.setZero();
  grad.combine.weight.setZero();
  grad.combine.bias.setZero();
  const Matrix dx = fuse_backward(store, p, cache, probe, grad);

  const double h = 1e-6;
  auto check = [&](Matrix& m, const Matrix& g) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double orig = m.data()[i];
      m.data()[i] = orig + h;
      const double up = loss();
      m.data()[i] = orig - h;
      const double down = loss();
      m.data()[i] = orig;
      EXPECT_NEAR(g.data()[i], (up - down) / (2 * h), 1e-6);
    }
  };
  check(p.pointwise.weight, grad.pointwise.weight);
  check(p.pointwise.bias, grad.pointwise.bias);
  check(p.combine.weight, grad.combine.weight);
  check(p.combine.bias, grad.combine.bias);
  check(cur.features, dx);
}

}  // namespace
}  // namespace scalseg
