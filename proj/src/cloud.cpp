#include "scalseg/cloud.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <spdlog/spdlog.h>

#include "scalseg/error.hpp"

namespace scalseg {

PointCloud::PointCloud(std::vector<Vec3> positions, std::vector<Vec3> colors,
                       std::optional<std::vector<std::uint16_t>> labels,
                       int num_classes)
    : positions_(std::move(positions)),
      colors_(std::move(colors)),
      labels_(std::move(labels)),
      num_classes_(num_classes) {
  if (positions_.size() != colors_.size()) {
    throw InputError("point cloud: positions/colors length mismatch");
  }
  if (labels_ && labels_->size() != positions_.size()) {
    throw InputError("point cloud: positions/labels length mismatch");
  }
  if (num_classes_ < 0) throw InputError("point cloud: negative num_classes");
  for (std::size_t i = 0; i < positions_.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      if (!std::isfinite(positions_[i][a])) {
        throw InputError("point cloud: non-finite coordinate at point " +
                         std::to_string(i));
      }
      const double c = colors_[i][a];
      if (!(c >= 0.0 && c <= 1.0)) {
        throw InputError("point cloud: color outside [0,1] at point " +
                         std::to_string(i));
      }
    }
  }
  if (labels_) {
    for (std::size_t i = 0; i < labels_->size(); ++i) {
      if ((*labels_)[i] >= num_classes_) {
        throw InputError("point cloud: label " +
                         std::to_string((*labels_)[i]) + " >= num_classes " +
                         std::to_string(num_classes_) + " at point " +
                         std::to_string(i));
      }
    }
  }
}

std::span<const std::uint16_t> PointCloud::labels() const {
  if (!labels_) return {};
  return *labels_;
}

std::vector<VoxelKey> voxel_keys(std::span<const Vec3> positions,
                                 double voxel_size, const Vec3& origin) {
  if (!(voxel_size > 0.0) || !std::isfinite(voxel_size)) {
    throw InputError("voxel_keys: voxel size must be positive and finite");
  }
  std::vector<VoxelKey> keys(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      const double c = positions[i][a];
      if (!std::isfinite(c)) {
        throw InputError("voxel_keys: non-finite coordinate at point " +
                         std::to_string(i));
      }
      keys[i][a] =
          static_cast<std::int64_t>(std::floor((c - origin[a]) / voxel_size));
    }
  }
  return keys;
}

std::vector<VoxelKey> voxel_keys(const PointCloud& cloud, double voxel_size,
                                 const Vec3& origin) {
  return voxel_keys(cloud.positions(), voxel_size, origin);
}

PointCloud gather(const PointCloud& cloud, std::span<const Index> indices) {
  std::vector<Vec3> pos;
  std::vector<Vec3> col;
  pos.reserve(indices.size());
  col.reserve(indices.size());
  std::optional<std::vector<std::uint16_t>> labels;
  if (cloud.has_labels()) {
    labels.emplace();
    labels->reserve(indices.size());
  }
  for (Index idx : indices) {
    if (idx >= cloud.size()) {
      throw InputError("gather: index " + std::to_string(idx) +
                       " out of range for cloud of " +
                       std::to_string(cloud.size()) + " points");
    }
    pos.push_back(cloud.positions()[idx]);
    col.push_back(cloud.colors()[idx]);
    if (labels) labels->push_back(cloud.labels()[idx]);
  }
  return PointCloud(std::move(pos), std::move(col), std::move(labels),
                    cloud.num_classes());
}

void PartitionConfig::validate() const {
  if (voxel_sizes.empty()) {
    throw ConfigError("partition config: at least one voxel size required");
  }
  for (std::size_t i = 0; i < voxel_sizes.size(); ++i) {
    if (!(voxel_sizes[i] > 0.0) || !std::isfinite(voxel_sizes[i])) {
      throw ConfigError("partition config: voxel sizes must be positive");
    }
    if (i > 0 && !(voxel_sizes[i] < voxel_sizes[i - 1])) {
      throw ConfigError(
          "partition config: voxel sizes must be strictly decreasing");
    }
  }
}

std::size_t PartitionSet::total_selected() const {
  std::size_t n = 0;
  for (const auto& p : partitions) n += p.size();
  return n;
}

std::vector<std::size_t> PartitionSet::sizes() const {
  std::vector<std::size_t> out;
  out.reserve(partitions.size());
  for (const auto& p : partitions) out.push_back(p.size());
  return out;
}

bool PartitionSet::sizes_strictly_increasing() const {
  for (std::size_t i = 1; i < partitions.size(); ++i) {
    if (partitions[i].size() <= partitions[i - 1].size()) return false;
  }
  return true;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

std::uint64_t voxel_draw(std::uint64_t seed, std::size_t scale,
                         const VoxelKey& key) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ static_cast<std::uint64_t>(scale));
  for (std::int64_t k : key) h = mix64(h ^ static_cast<std::uint64_t>(k));
  return h;
}

}  // namespace

PartitionSet build_partitions(const PointCloud& cloud,
                              const PartitionConfig& cfg) {
  cfg.validate();
  PartitionSet set;
  set.voxel_sizes = cfg.voxel_sizes;
  set.source_point_count = cloud.size();
  set.partitions.resize(cfg.voxel_sizes.size());
  if (cloud.empty()) return set;

  std::vector<Index> pool(cloud.size());
  std::iota(pool.begin(), pool.end(), Index{0});
  std::vector<VoxelKey> keys;
  std::vector<std::size_t> order;
  std::vector<char> taken(cloud.size(), 0);

  for (std::size_t scale = 0; scale < cfg.voxel_sizes.size(); ++scale) {
    std::vector<Vec3> pool_pos(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
      pool_pos[i] = cloud.positions()[pool[i]];
    }
    keys = voxel_keys(pool_pos, cfg.voxel_sizes[scale], cfg.grid_origin);

    // Group the pool by voxel; within a voxel candidates stay in index order.
    order.resize(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (keys[a] != keys[b]) return keys[a] < keys[b];
      return pool[a] < pool[b];
    });

    auto& selected = set.partitions[scale];
    for (std::size_t begin = 0; begin < order.size();) {
      std::size_t end = begin + 1;
      while (end < order.size() && keys[order[end]] == keys[order[begin]]) {
        ++end;
      }
      const std::uint64_t draw =
          voxel_draw(cfg.rng_seed, scale, keys[order[begin]]);
      const std::size_t pick = begin + draw % (end - begin);
      selected.push_back(pool[order[pick]]);
      begin = end;
    }
    std::sort(selected.begin(), selected.end());
    for (Index idx : selected) taken[idx] = 1;

    std::erase_if(pool, [&](Index idx) { return taken[idx] != 0; });
  }

  if (!set.sizes_strictly_increasing()) {
    std::string sizes;
    for (std::size_t n : set.sizes()) sizes += std::to_string(n) + " ";
    spdlog::warn("partition sizes are not strictly increasing: {}", sizes);
  }
  return set;
}

}  // namespace scalseg
