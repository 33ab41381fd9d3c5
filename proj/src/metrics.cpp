#include "scalseg/metrics.hpp"

#include <string>

#include "scalseg/error.hpp"

namespace scalseg {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : num_classes_(num_classes),
      counts_(static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(num_classes), 0) {
  if (num_classes < 1) throw InputError("confusion matrix: need >= 1 class");
}

ConfusionMatrix::ConfusionMatrix(int num_classes, std::vector<std::uint64_t> counts)
    : ConfusionMatrix(num_classes) {
  if (counts.size() != counts_.size()) {
    throw InputError("confusion matrix: expected " + std::to_string(counts_.size()) +
                     " counts");
  }
  counts_ = std::move(counts);
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t n = 0;
  for (auto c : counts_) n += c;
  return n;
}

void ConfusionMatrix::add(int truth, int predicted) {
  if (truth < 0 || truth >= num_classes_ || predicted < 0 ||
      predicted >= num_classes_) {
    throw InputError("confusion matrix: class out of range");
  }
  ++counts_[static_cast<std::size_t>(truth * num_classes_ + predicted)];
}

void ConfusionMatrix::add(std::span<const std::uint16_t> truth,
                          std::span<const std::uint16_t> predicted) {
  if (truth.size() != predicted.size()) {
    throw InputError("confusion matrix: truth/prediction length mismatch");
  }
  for (std::size_t i = 0; i < truth.size(); ++i) add(truth[i], predicted[i]);
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_) {
    throw InputError("confusion matrix: class count mismatch");
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

SegmentationMetrics compute_metrics(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw InputError("metrics: empty confusion matrix");
  const int c = cm.num_classes();
  SegmentationMetrics m;
  m.class_accuracy.resize(static_cast<std::size_t>(c));
  m.class_iou.resize(static_cast<std::size_t>(c));

  std::uint64_t trace = 0;
  double acc_sum = 0.0;
  double iou_sum = 0.0;
  int acc_n = 0;
  int iou_n = 0;
  for (int k = 0; k < c; ++k) {
    std::uint64_t row = 0;
    std::uint64_t col = 0;
    for (int j = 0; j < c; ++j) {
      row += cm.count(k, j);
      col += cm.count(j, k);
    }
    const std::uint64_t tp = cm.count(k, k);
    trace += tp;
    if (row > 0) {
      const double acc = static_cast<double>(tp) / static_cast<double>(row);
      m.class_accuracy[static_cast<std::size_t>(k)] = acc;
      acc_sum += acc;
      ++acc_n;
    }
    const std::uint64_t denom = row + col - tp;
    if (denom > 0) {
      const double iou = static_cast<double>(tp) / static_cast<double>(denom);
      m.class_iou[static_cast<std::size_t>(k)] = iou;
      iou_sum += iou;
      ++iou_n;
    }
  }
  m.overall_accuracy = static_cast<double>(trace) / static_cast<double>(total);
  m.mean_accuracy = acc_n > 0 ? acc_sum / acc_n : 0.0;
  m.mean_iou = iou_n > 0 ? iou_sum / iou_n : 0.0;
  return m;
}

}  // namespace scalseg
