#include "scalseg/neighbor_index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scalseg/error.hpp"

namespace scalseg {
namespace {

constexpr std::uint32_t kLeafSize = 12;

inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

bool finite(const Vec3& p) {
  return std::isfinite(p[0]) && std::isfinite(p[1]) && std::isfinite(p[2]);
}

}  // namespace

// Bounded max-heap on (dist2, id).
class NeighborIndex::TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k + 1); }

  bool full() const { return heap_.size() == k_; }
  double worst() const { return heap_.front().dist2; }

  void offer(const Candidate& c) {
    if (!full()) {
      heap_.push_back(c);
      std::push_heap(heap_.begin(), heap_.end());
    } else if (c < heap_.front()) {
      std::pop_heap(heap_.begin(), heap_.end());
      heap_.back() = c;
      std::push_heap(heap_.begin(), heap_.end());
    }
  }

  std::vector<Candidate> sorted() {
    std::sort_heap(heap_.begin(), heap_.end());
    return std::move(heap_);
  }

 private:
  std::size_t k_;
  std::vector<Candidate> heap_;
};

NeighborIndex::NeighborIndex(std::vector<Vec3> points, SearchStrategy strategy)
    : points_(std::move(points)), strategy_(strategy) {
  if (points_.empty()) {
    throw InputError("neighbor index: cannot build over an empty point set");
  }
  for (const auto& p : points_) {
    if (!finite(p)) {
      throw InputError("neighbor index: non-finite coordinate");
    }
  }
  if (strategy_ == SearchStrategy::kKdTree) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), Index{0});
    nodes_.reserve(2 * points_.size() / kLeafSize + 1);
    build(0, static_cast<std::uint32_t>(points_.size()));
  }
}

std::int32_t NeighborIndex::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = points_[order_[begin]];
  Vec3 hi = lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    const auto& p = points_[order_[i]];
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  int axis = 0;
  for (int a = 1; a < 3; ++a) {
    if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
  }
  if (hi[axis] == lo[axis]) return id;  // all coincident: keep as leaf

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end, [&](Index a, Index b) {
                     return points_[a][axis] < points_[b][axis];
                   });
  const double split = points_[order_[mid]][axis];

  nodes_[id].axis = axis;
  nodes_[id].split = split;
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void NeighborIndex::search(std::int32_t node_id, const Vec3& q, TopK& best,
                           std::uint64_t& evals) const {
  const Node& node = nodes_[node_id];
  if (node.left < 0) {
    for (std::uint32_t i = node.begin; i < node.end; ++i) {
      const Index id = order_[i];
      best.offer({squared_distance(q, points_[id]), id});
    }
    evals += node.end - node.begin;
    return;
  }
  // Left holds coordinates <= split, right holds >= split.
  const double diff = q[node.axis] - node.split;
  const std::int32_t near = diff < 0.0 ? node.left : node.right;
  const std::int32_t far = diff < 0.0 ? node.right : node.left;
  search(near, q, best, evals);
  // `<=` keeps equal-distance candidates with lower ids reachable.
  if (!best.full() || diff * diff <= best.worst()) {
    search(far, q, best, evals);
  }
}

void NeighborIndex::query(const Vec3& q, TopK& best) const {
  if (!finite(q)) throw InputError("knn: non-finite query");
  std::uint64_t evals = 0;
  if (strategy_ == SearchStrategy::kLinearScan) {
    for (Index id = 0; id < points_.size(); ++id) {
      best.offer({squared_distance(q, points_[id]), id});
    }
    evals = points_.size();
  } else {
    search(0, q, best, evals);
  }
  distance_evals_.fetch_add(evals, std::memory_order_relaxed);
}

std::vector<Neighbor> NeighborIndex::knn(const Vec3& query_point,
                                         std::size_t k) const {
  if (k < 1) throw InputError("knn: k must be >= 1");
  TopK best(std::min(k, points_.size()));
  query(query_point, best);
  std::vector<Neighbor> out;
  for (const auto& c : best.sorted()) {
    out.push_back({c.id, std::sqrt(c.dist2)});
  }
  return out;
}

std::vector<Index> NeighborIndex::knn_batch(std::span<const Vec3> queries,
                                            std::size_t k,
                                            std::vector<double>* distances) const {
  if (k < 1) throw InputError("knn: k must be >= 1");
  const std::size_t kk = std::min(k, points_.size());
  std::vector<Index> ids(queries.size() * kk);
  if (distances) distances->assign(queries.size() * kk, 0.0);
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    TopK best(kk);
    query(queries[qi], best);
    const auto sorted = best.sorted();
    for (std::size_t s = 0; s < kk; ++s) {
      ids[qi * kk + s] = sorted[s].id;
      if (distances) (*distances)[qi * kk + s] = std::sqrt(sorted[s].dist2);
    }
  }
  return ids;
}

}  // namespace scalseg
