#include "scalseg/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "scalseg/error.hpp"

namespace scalseg {
namespace {

TEST(MetricsTest, HandExample) {
  const SegmentationMetrics m = compute_metrics(ConfusionMatrix(2, {3, 1, 2, 4}));
  EXPECT_NEAR(m.overall_accuracy, 0.7, 1e-9);
  EXPECT_NEAR(m.mean_accuracy, (0.75 + 2.0 / 3.0) / 2.0, 1e-9);
  EXPECT_NEAR(m.mean_iou, (3.0 / 6.0 + 4.0 / 7.0) / 2.0, 1e-9);
  EXPECT_NEAR(m.mean_accuracy, 0.708333333, 1e-9);
  EXPECT_NEAR(m.mean_iou, 0.535714286, 1e-9);
}

TEST(MetricsTest, PerfectPrediction) {
  ConfusionMatrix cm(4);
  const std::vector<std::uint16_t> labels{0, 1, 2, 3, 3, 2, 0};
  cm.add(labels, labels);
  const SegmentationMetrics m = compute_metrics(cm);
  EXPECT_EQ(m.overall_accuracy, 1.0);
  EXPECT_EQ(m.mean_accuracy, 1.0);
  EXPECT_EQ(m.mean_iou, 1.0);
}

TEST(MetricsTest, AbsentClassIsExcluded) {
  // Class 2 never appears; class 1 is predicted but never true.
  const SegmentationMetrics m = compute_metrics(ConfusionMatrix(3, {4, 1, 0, 0, 0, 0, 0, 0, 0}));
  EXPECT_FALSE(m.class_accuracy[1].has_value());
  EXPECT_FALSE(m.class_accuracy[2].has_value());
  EXPECT_FALSE(m.class_iou[2].has_value());
  ASSERT_TRUE(m.class_iou[1].has_value());
  EXPECT_EQ(*m.class_iou[1], 0.0);
  EXPECT_DOUBLE_EQ(m.mean_accuracy, 0.8);
  EXPECT_DOUBLE_EQ(m.mean_iou, 0.4);
}

TEST(MetricsTest, RejectsEmptyAndOutOfRange) {
  EXPECT_THROW(compute_metrics(ConfusionMatrix(3)), InputError);
  ConfusionMatrix cm(2);
  EXPECT_THROW(cm.add(2, 0), InputError);
  const std::vector<std::uint16_t> a{0, 1};
  const std::vector<std::uint16_t> b{0};
  EXPECT_THROW(cm.add(a, b), InputError);
  EXPECT_THROW(ConfusionMatrix(2, {1, 2, 3}), InputError);
}

ConfusionMatrix random_matrix(int c, std::mt19937_64& rng) {
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(c * c));
  for (auto& v : counts) v = rng() % 4 == 0 ? 0 : rng() % 50;
  counts[0] += 1;
  return ConfusionMatrix(c, counts);
}

TEST(MetricsTest, InvariantUnderClassRelabeling) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const int c = 2 + static_cast<int>(rng() % 6);
    const ConfusionMatrix cm = random_matrix(c, rng);
    std::vector<int> perm(static_cast<std::size_t>(c));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::uint64_t> permuted(static_cast<std::size_t>(c * c));
    for (int t = 0; t < c; ++t)
      for (int p = 0; p < c; ++p)
        permuted[static_cast<std::size_t>(perm[t] * c + perm[p])] = cm.count(t, p);
    const SegmentationMetrics a = compute_metrics(cm);
    const SegmentationMetrics b = compute_metrics(ConfusionMatrix(c, permuted));
    EXPECT_EQ(a.overall_accuracy, b.overall_accuracy);
    EXPECT_NEAR(a.mean_accuracy, b.mean_accuracy, 1e-15);
    EXPECT_NEAR(a.mean_iou, b.mean_iou, 1e-15);
  }
}

TEST(MetricsTest, BoundsAndIouBelowAccuracy) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const int c = 2 + static_cast<int>(rng() % 8);
    const SegmentationMetrics m = compute_metrics(random_matrix(c, rng));
    for (double v : {m.overall_accuracy, m.mean_accuracy, m.mean_iou}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    for (int k = 0; k < c; ++k) {
      const auto i = static_cast<std::size_t>(k);
      if (m.class_iou[i] && m.class_accuracy[i]) {
        EXPECT_LE(*m.class_iou[i], *m.class_accuracy[i]);
      }
    }
  }
}

TEST(MetricsTest, MergeAddsCounts) {
  ConfusionMatrix a(2, {1, 2, 3, 4});
  a.merge(ConfusionMatrix(2, {1, 1, 1, 1}));
  EXPECT_EQ(a.count(1, 0), 4u);
  EXPECT_EQ(a.total(), 14u);
  EXPECT_THROW(a.merge(ConfusionMatrix(3)), InputError);
}

}  // namespace
}  // namespace scalseg
