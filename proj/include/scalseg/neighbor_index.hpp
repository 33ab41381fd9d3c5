#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <vector>

#include "scalseg/cloud.hpp"

namespace scalseg {

struct Neighbor {
  Index id = 0;
  double distance = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

enum class SearchStrategy {
  kKdTree,
  // Scans every stored point per query, like the batched KNN kernels used by
  // point-transformer backbones. Exact, with quadratic total work.
  kLinearScan,
};

// Exact Euclidean k-nearest-neighbor index over a fixed 3D point set.
//
// Results are sorted by ascending distance; equal distances are ordered by
// lower point id. The index is immutable after construction and queries may be
// issued concurrently. Every point-to-point distance computed by a query is
// counted; see distance_evaluations().
class NeighborIndex {
 public:
  // Throws InputError for an empty set or non-finite coordinates.
  explicit NeighborIndex(std::vector<Vec3> points,
                         SearchStrategy strategy = SearchStrategy::kKdTree);

  NeighborIndex(const NeighborIndex&) = delete;
  NeighborIndex& operator=(const NeighborIndex&) = delete;

  std::size_t size() const { return points_.size(); }
  SearchStrategy strategy() const { return strategy_; }
  const std::vector<Vec3>& points() const { return points_; }

  // min(k, size()) neighbors. Throws InputError on a non-finite query or k < 1.
  std::vector<Neighbor> knn(const Vec3& query, std::size_t k) const;

  // Row-major (queries.size() x min(k, size())) neighbor ids for a batch of
  // queries; distances are written to `distances` when non-null.
  std::vector<Index> knn_batch(std::span<const Vec3> queries, std::size_t k,
                               std::vector<double>* distances = nullptr) const;

  std::uint64_t distance_evaluations() const {
    return distance_evals_.load(std::memory_order_relaxed);
  }

 private:
  struct Node {
    // Leaf: [begin, end) into order_. Inner: split on `axis` at `split`.
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    int axis = 0;
    double split = 0.0;
  };

  struct Candidate {
    double dist2;
    Index id;
    bool operator<(const Candidate& o) const {
      return dist2 < o.dist2 || (dist2 == o.dist2 && id < o.id);
    }
  };

  class TopK;

  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void search(std::int32_t node, const Vec3& q, TopK& best,
              std::uint64_t& evals) const;
  void query(const Vec3& q, TopK& best) const;

  std::vector<Vec3> points_;
  SearchStrategy strategy_;
  std::vector<Index> order_;
  std::vector<Node> nodes_;
  mutable std::atomic<std::uint64_t> distance_evals_{0};
};

}  // namespace scalseg
