#include "scalseg/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "scalseg/error.hpp"

namespace scalseg {
namespace {

// Axis-aligned rectangle: origin plus two spanning edges.
struct Surface {
  Vec3 origin;
  Vec3 u;
  Vec3 v;
  std::uint16_t label;

  double area() const {
    auto len = [](const Vec3& a) {
      return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
    };
    return len(u) * len(v);
  }
};

constexpr std::array<Vec3, 13> kPalette{{
    {0.55, 0.50, 0.45}, {0.85, 0.85, 0.80}, {0.80, 0.20, 0.20},
    {0.20, 0.60, 0.25}, {0.20, 0.30, 0.80}, {0.90, 0.75, 0.20},
    {0.60, 0.25, 0.70}, {0.20, 0.75, 0.75}, {0.95, 0.50, 0.15},
    {0.40, 0.25, 0.10}, {0.65, 0.85, 0.35}, {0.95, 0.60, 0.75},
    {0.15, 0.15, 0.15},
}};

void add_box(std::vector<Surface>& out, const Vec3& lo, const Vec3& size,
             std::uint16_t label) {
  const double w = size[0], d = size[1], h = size[2];
  // Top and the four sides; the bottom rests on the floor.
  out.push_back({{lo[0], lo[1], lo[2] + h}, {w, 0, 0}, {0, d, 0}, label});
  out.push_back({{lo[0], lo[1], lo[2]}, {w, 0, 0}, {0, 0, h}, label});
  out.push_back({{lo[0], lo[1] + d, lo[2]}, {w, 0, 0}, {0, 0, h}, label});
  out.push_back({{lo[0], lo[1], lo[2]}, {0, d, 0}, {0, 0, h}, label});
  out.push_back({{lo[0] + w, lo[1], lo[2]}, {0, d, 0}, {0, 0, h}, label});
}

}  // namespace

void SceneSpec::validate() const {
  for (double e : extent) {
    if (!(e > 0.0) || !std::isfinite(e)) throw ConfigError("scene: extents must be positive");
  }
  if (num_classes < 2) throw ConfigError("scene: need at least 2 classes");
  if (num_classes > static_cast<int>(kPalette.size())) {
    throw ConfigError("scene: at most 13 classes supported");
  }
  if (num_objects < 0) throw ConfigError("scene: negative object count");
  if (num_points == 0) throw ConfigError("scene: zero points requested");
  if (!(noise_sigma >= 0.0) || !(color_noise >= 0.0)) {
    throw ConfigError("scene: noise must be non-negative");
  }
}

PointCloud generate_scene(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(mix64(spec.rng_seed));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double ex = spec.extent[0], ey = spec.extent[1], ez = spec.extent[2];

  std::vector<Surface> surfaces;
  surfaces.push_back({{0, 0, 0}, {ex, 0, 0}, {0, ey, 0}, 0});
  const bool walls = spec.num_classes >= 3;
  if (walls) {
    surfaces.push_back({{0, 0, 0}, {ex, 0, 0}, {0, 0, ez}, 1});
    surfaces.push_back({{0, ey, 0}, {ex, 0, 0}, {0, 0, ez}, 1});
    surfaces.push_back({{0, 0, 0}, {0, ey, 0}, {0, 0, ez}, 1});
    surfaces.push_back({{ex, 0, 0}, {0, ey, 0}, {0, 0, ez}, 1});
  }
  const int first_object_class = walls ? 2 : 1;
  const int object_classes = spec.num_classes - first_object_class;
  for (int b = 0; b < spec.num_objects; ++b) {
    Vec3 size;
    const double max_w = std::max(0.3, std::min(1.2, ex / 3.0));
    const double max_d = std::max(0.3, std::min(1.2, ey / 3.0));
    const double max_h = std::max(0.3, std::min(1.5, ez * 0.8));
    size[0] = 0.3 + (max_w - 0.3) * unit(rng);
    size[1] = 0.3 + (max_d - 0.3) * unit(rng);
    size[2] = 0.3 + (max_h - 0.3) * unit(rng);
    for (int a = 0; a < 2; ++a) size[a] = std::min(size[a], spec.extent[a] * 0.9);
    size[2] = std::min(size[2], ez);
    const Vec3 lo{(ex - size[0]) * unit(rng), (ey - size[1]) * unit(rng), 0.0};
    add_box(surfaces, lo, size,
            static_cast<std::uint16_t>(first_object_class + b % object_classes));
  }

  std::vector<double> areas;
  for (const auto& s : surfaces) areas.push_back(s.area());
  std::discrete_distribution<std::size_t> pick(areas.begin(), areas.end());
  std::normal_distribution<double> pos_noise(0.0, spec.noise_sigma);
  std::normal_distribution<double> col_noise(0.0, spec.color_noise);

  std::vector<Vec3> positions(spec.num_points);
  std::vector<Vec3> colors(spec.num_points);
  std::vector<std::uint16_t> labels(spec.num_points);
  for (std::size_t i = 0; i < spec.num_points; ++i) {
    const Surface& s = surfaces[pick(rng)];
    const double a = unit(rng);
    const double b = unit(rng);
    for (int k = 0; k < 3; ++k) {
      double p = s.origin[k] + a * s.u[k] + b * s.v[k];
      if (spec.noise_sigma > 0.0) p += pos_noise(rng);
      positions[i][k] = std::clamp(p, 0.0, spec.extent[k]);
      double c = kPalette[s.label][k];
      if (spec.color_noise > 0.0) c += col_noise(rng);
      colors[i][k] = std::round(std::clamp(c, 0.0, 1.0) * 255.0) / 255.0;
    }
    labels[i] = s.label;
  }
  return PointCloud(std::move(positions), std::move(colors), std::move(labels),
                    spec.num_classes);
}

}  // namespace scalseg
