#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace scalseg {

using Vec3 = std::array<double, 3>;
using VoxelKey = std::array<std::int64_t, 3>;
using Index = std::uint32_t;

// A colored point cloud with optional per-point class labels.
//
// Positions are in meters, colors are normalized to [0, 1]. When labels are
// present every label is < num_classes. Instances are immutable after
// construction; use gather() to derive sub-clouds.
class PointCloud {
 public:
  PointCloud() = default;
  // Throws InputError when the invariants do not hold.
  PointCloud(std::vector<Vec3> positions, std::vector<Vec3> colors,
             std::optional<std::vector<std::uint16_t>> labels = std::nullopt,
             int num_classes = 0);

  std::size_t size() const { return positions_.size(); }
  bool empty() const { return positions_.empty(); }
  bool has_labels() const { return labels_.has_value(); }
  int num_classes() const { return num_classes_; }

  const std::vector<Vec3>& positions() const { return positions_; }
  const std::vector<Vec3>& colors() const { return colors_; }
  // Empty span when the cloud is unlabeled.
  std::span<const std::uint16_t> labels() const;

  friend bool operator==(const PointCloud&, const PointCloud&) = default;

 private:
  std::vector<Vec3> positions_;
  std::vector<Vec3> colors_;
  std::optional<std::vector<std::uint16_t>> labels_;
  int num_classes_ = 0;
};

// Grid key floor((p - origin) / voxel_size) of every point.
std::vector<VoxelKey> voxel_keys(std::span<const Vec3> positions,
                                 double voxel_size, const Vec3& origin = {});
std::vector<VoxelKey> voxel_keys(const PointCloud& cloud, double voxel_size,
                                 const Vec3& origin = {});

// Sub-cloud in index order. Throws InputError on an out-of-range index.
PointCloud gather(const PointCloud& cloud, std::span<const Index> indices);

struct PartitionConfig {
  // Coarsest first, strictly decreasing.
  std::vector<double> voxel_sizes{0.16, 0.12, 0.08, 0.06};
  std::uint64_t rng_seed = 0;
  Vec3 grid_origin{0.0, 0.0, 0.0};

  // Throws ConfigError.
  void validate() const;
};

// s disjoint index lists into a source cloud, coarsest scale first.
struct PartitionSet {
  std::vector<std::vector<Index>> partitions;
  std::vector<double> voxel_sizes;
  std::size_t source_point_count = 0;

  std::size_t num_scales() const { return partitions.size(); }
  std::size_t total_selected() const;
  std::vector<std::size_t> sizes() const;
  // N_1 < N_2 < ... < N_s.
  bool sizes_strictly_increasing() const;

  friend bool operator==(const PartitionSet&, const PartitionSet&) = default;
};

// Voxelizes the not-yet-selected pool at each voxel size in turn and keeps one
// uniformly chosen point per occupied voxel. The choice is keyed on
// (rng_seed, scale, voxel key) so it does not depend on traversal order.
PartitionSet build_partitions(const PointCloud& cloud,
                              const PartitionConfig& cfg);

// Stateless 64-bit mixer (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t x);

}  // namespace scalseg
