#include "scalseg/fusion.hpp"

#include <string>

#include "scalseg/error.hpp"

namespace scalseg {

void FusionConfig::validate() const {
  if (k_fuse < 1) throw ConfigError("fusion config: k_fuse must be >= 1");
  if (feature_dim < 1) {
    throw ConfigError("fusion config: feature_dim must be >= 1");
  }
}

void FeatureStore::append(const FeatureMatrix& fused) {
  if (!scale_ids_.empty() && fused.scale_id <= scale_ids_.back()) {
    throw InvariantError("feature store: scale " +
                         std::to_string(fused.scale_id) +
                         " appended after scale " +
                         std::to_string(scale_ids_.back()));
  }
  if (static_cast<Eigen::Index>(fused.positions.size()) !=
      fused.features.rows()) {
    throw InputError("feature store: positions/features row mismatch");
  }
  if (!empty() && fused.features.cols() != features_.cols()) {
    throw InputError("feature store: feature width mismatch");
  }
  const Eigen::Index old_rows = features_.rows();
  Matrix grown(old_rows + fused.features.rows(), fused.features.cols());
  if (old_rows > 0) grown.topRows(old_rows) = features_;
  grown.bottomRows(fused.features.rows()) = fused.features;
  features_ = std::move(grown);
  positions_.insert(positions_.end(), fused.positions.begin(),
                    fused.positions.end());
  row_scales_.insert(row_scales_.end(), fused.positions.size(), fused.scale_id);
  scale_ids_.push_back(fused.scale_id);
}

FeatureStore extend_store(FeatureStore store, const FeatureMatrix& fused) {
  store.append(fused);
  return store;
}

FeatureMatrix fuse(const FeatureStore& store, const FeatureMatrix& current,
                   const FusionParams& params, const FusionConfig& cfg,
                   SearchStrategy strategy, FusionCache* cache,
                   OpCounters* counters) {
  cfg.validate();
  if (store.empty()) {
    throw InvariantError("fuse: empty feature store (scale 1 has no fusion)");
  }
  const Eigen::Index f = current.features.cols();
  if (store.feature_dim() != f || f != cfg.feature_dim ||
      params.pointwise.in_dim() != f || params.combine.in_dim() != 2 * f) {
    throw InputError("fuse: feature width mismatch");
  }

  const NeighborIndex index(store.positions(), strategy);
  const auto kk = std::min<std::size_t>(cfg.k_fuse, store.rows());
  const std::vector<Index> nbr = index.knn_batch(current.positions, kk);
  if (counters) counters->distance_evals += index.distance_evaluations();

  const Eigen::Index rows = current.features.rows();
  const Matrix transformed = params.pointwise.forward(gather_rows(store.features(), nbr));

  Matrix concat(rows, 2 * f);
  std::vector<Index> argmax;
  if (cache) argmax.resize(static_cast<std::size_t>(rows * f));
  for (Eigen::Index j = 0; j < rows; ++j) {
    const Eigen::Index base = j * static_cast<Eigen::Index>(kk);
    for (Eigen::Index c = 0; c < f; ++c) {
      Eigen::Index best = base;
      for (Eigen::Index s = 1; s < static_cast<Eigen::Index>(kk); ++s) {
        if (transformed(base + s, c) > transformed(best, c)) best = base + s;
      }
      concat(j, c) = transformed(best, c);
      if (cache) argmax[static_cast<std::size_t>(j * f + c)] = nbr[best];
    }
  }
  concat.rightCols(f) = current.features;

  FeatureMatrix out;
  out.positions = current.positions;
  out.features = params.combine.forward(concat);
  out.scale_id = current.scale_id;

  if (cache) {
    cache->neighbors_per_row = kk;
    cache->neighbor_rows = nbr;
    cache->argmax_rows = std::move(argmax);
    cache->concat = std::move(concat);
  }
  return out;
}

Matrix fuse_backward(const FeatureStore& store, const FusionParams& params,
                     const FusionCache& cache, const Matrix& d_out,
                     FusionParams& grad) {
  const Eigen::Index f = params.pointwise.out_dim();
  const Matrix d_concat = params.combine.backward(cache.concat, d_out, grad.combine);
  const Matrix& s = store.features();
  for (Eigen::Index j = 0; j < d_concat.rows(); ++j) {
    for (Eigen::Index c = 0; c < f; ++c) {
      const double g = d_concat(j, c);
      if (g == 0.0) continue;
      const Index row = cache.argmax_rows[static_cast<std::size_t>(j * f + c)];
      grad.pointwise.weight.row(c) += g * s.row(row);
      grad.pointwise.bias(0, c) += g;
    }
  }
  return d_concat.rightCols(f);
}

void init_fusion_params(FusionParams& params, std::mt19937_64& rng) {
  params.pointwise.init_uniform(rng);
  params.combine.init_uniform(rng);
}

}  // namespace scalseg
