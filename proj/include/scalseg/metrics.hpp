#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace scalseg {

// Rows are ground truth, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);
  // Row-major counts of size num_classes^2.
  ConfusionMatrix(int num_classes, std::vector<std::uint64_t> counts);

  int num_classes() const { return num_classes_; }
  std::uint64_t count(int truth, int predicted) const {
    return counts_[static_cast<std::size_t>(truth * num_classes_ + predicted)];
  }
  std::uint64_t total() const;

  // Throws InputError on out-of-range classes or length mismatch.
  void add(int truth, int predicted);
  void add(std::span<const std::uint16_t> truth,
           std::span<const std::uint16_t> predicted);
  void merge(const ConfusionMatrix& other);

 private:
  int num_classes_;
  std::vector<std::uint64_t> counts_;
};

struct SegmentationMetrics {
  double overall_accuracy = 0.0;
  double mean_accuracy = 0.0;
  double mean_iou = 0.0;
  // nullopt for classes excluded from the means.
  std::vector<std::optional<double>> class_accuracy;
  std::vector<std::optional<double>> class_iou;
};

// Classes with an empty truth row are excluded from mAcc; classes absent from
// both truth and prediction are excluded from mIoU. Throws InputError when
// the matrix is empty.
SegmentationMetrics compute_metrics(const ConfusionMatrix& cm);

}  // namespace scalseg
