#include "scalseg/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scalseg/error.hpp"

namespace scalseg {
namespace {

// Attention pairs are materialized this many queries at a time when no cache
// is recorded.
constexpr Eigen::Index kInferenceChunk = 1024;

Matrix unpool(const Matrix& d_pooled, const PoolMap& map) {
  Matrix d_in(static_cast<Eigen::Index>(map.cluster.size()), d_pooled.cols());
  for (std::size_t i = 0; i < map.cluster.size(); ++i) {
    const Index c = map.cluster[i];
    d_in.row(static_cast<Eigen::Index>(i)) = d_pooled.row(c) * map.inv_count[c];
  }
  return d_in;
}

Matrix interpolate_backward(const Matrix& d_out, const InterpMap& map,
                            Eigen::Index source_rows) {
  Matrix d_src = Matrix::Zero(source_rows, d_out.cols());
  const std::size_t kk = map.neighbors_per_row;
  for (Eigen::Index j = 0; j < d_out.rows(); ++j) {
    for (std::size_t s = 0; s < kk; ++s) {
      const std::size_t p = static_cast<std::size_t>(j) * kk + s;
      d_src.row(map.ids[p]) += map.weights[p] * d_out.row(j);
    }
  }
  return d_src;
}

}  // namespace

FeatureMatrix EncoderResult::features() const {
  FeatureMatrix out;
  out.positions = levels.back().positions;
  out.features = levels.back().features;
  out.scale_id = scale_id;
  return out;
}

PoolMap grid_pool_map(std::span<const Vec3> positions, double voxel_size) {
  const std::vector<VoxelKey> keys = voxel_keys(positions, voxel_size);
  std::vector<std::size_t> order(keys.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  PoolMap map;
  map.cluster.resize(keys.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (r > 0 && keys[order[r]] != keys[order[r - 1]]) ++map.clusters;
    map.cluster[order[r]] = static_cast<Index>(map.clusters);
  }
  if (!keys.empty()) ++map.clusters;
  std::vector<std::size_t> counts(map.clusters, 0);
  for (Index c : map.cluster) ++counts[c];
  map.inv_count.resize(map.clusters);
  for (std::size_t c = 0; c < map.clusters; ++c) {
    map.inv_count[c] = 1.0 / static_cast<double>(counts[c]);
  }
  return map;
}

EncoderLevel grid_pool(const EncoderLevel& level, const PoolMap& map) {
  EncoderLevel out;
  out.positions.assign(map.clusters, Vec3{0.0, 0.0, 0.0});
  out.features = Matrix::Zero(static_cast<Eigen::Index>(map.clusters),
                              level.features.cols());
  for (std::size_t i = 0; i < map.cluster.size(); ++i) {
    const Index c = map.cluster[i];
    for (int a = 0; a < 3; ++a) out.positions[c][a] += level.positions[i][a];
    out.features.row(c) += level.features.row(static_cast<Eigen::Index>(i));
  }
  for (std::size_t c = 0; c < map.clusters; ++c) {
    for (int a = 0; a < 3; ++a) out.positions[c][a] *= map.inv_count[c];
    out.features.row(static_cast<Eigen::Index>(c)) *= map.inv_count[c];
  }
  return out;
}

InterpMap interpolation_map(const NeighborIndex& source,
                            std::span<const Vec3> targets, std::size_t k) {
  InterpMap map;
  std::vector<double> dist;
  map.ids = source.knn_batch(targets, k, &dist);
  map.neighbors_per_row = std::min(k, source.size());
  map.weights.resize(dist.size());
  const std::size_t kk = map.neighbors_per_row;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    double total = 0.0;
    for (std::size_t s = 0; s < kk; ++s) {
      const double w = 1.0 / (dist[j * kk + s] + kInterpEpsilon);
      map.weights[j * kk + s] = w;
      total += w;
    }
    for (std::size_t s = 0; s < kk; ++s) map.weights[j * kk + s] /= total;
  }
  return map;
}

Matrix interpolate(const Matrix& source_features, const InterpMap& map) {
  const std::size_t kk = map.neighbors_per_row;
  const auto rows = static_cast<Eigen::Index>(map.ids.size() / std::max<std::size_t>(kk, 1));
  Matrix out = Matrix::Zero(rows, source_features.cols());
  for (Eigen::Index j = 0; j < rows; ++j) {
    for (std::size_t s = 0; s < kk; ++s) {
      const std::size_t p = static_cast<std::size_t>(j) * kk + s;
      out.row(j) += map.weights[p] * source_features.row(map.ids[p]);
    }
  }
  return out;
}

Matrix attention_forward(const AttentionParams& params,
                         std::span<const Vec3> positions, const Matrix& x,
                         std::size_t k, SearchStrategy strategy,
                         AttentionCache* cache, OpCounters* counters) {
  const Eigen::Index m = x.rows();
  const NeighborIndex index(std::vector<Vec3>(positions.begin(), positions.end()),
                            strategy);
  const std::size_t kk = std::min<std::size_t>(k, index.size());
  std::vector<Index> nbr = index.knn_batch(positions, kk);
  if (counters) counters->distance_evals += index.distance_evaluations();

  const Matrix q = params.query.forward(x);
  const Matrix key = params.key.forward(x);
  const Matrix v = params.value.forward(x);
  Matrix out = x;

  const Eigen::Index chunk = cache ? std::max<Eigen::Index>(m, 1) : kInferenceChunk;
  const auto ek = static_cast<Eigen::Index>(kk);
  for (Eigen::Index j0 = 0; j0 < m; j0 += chunk) {
    const Eigen::Index j1 = std::min(m, j0 + chunk);
    const Eigen::Index pairs = (j1 - j0) * ek;
    Matrix rel(pairs, 3);
    for (Eigen::Index j = j0; j < j1; ++j) {
      for (Eigen::Index s = 0; s < ek; ++s) {
        const Index n = nbr[static_cast<std::size_t>(j * ek + s)];
        const Eigen::Index p = (j - j0) * ek + s;
        for (int a = 0; a < 3; ++a) rel(p, a) = positions[j][a] - positions[n][a];
      }
    }
    Matrix pos_hidden = relu(params.pos_hidden.forward(rel));
    Matrix combined = params.pos_out.forward(pos_hidden);
    for (Eigen::Index j = j0; j < j1; ++j) {
      for (Eigen::Index s = 0; s < ek; ++s) {
        const Index n = nbr[static_cast<std::size_t>(j * ek + s)];
        combined.row((j - j0) * ek + s) += q.row(j) - key.row(n);
      }
    }
    Matrix attn_hidden = relu(params.attn_hidden.forward(combined));
    Matrix w = params.attn_out.forward(attn_hidden);
    for (Eigen::Index j = j0; j < j1; ++j) {
      auto block = w.middleRows((j - j0) * ek, ek);
      const Eigen::RowVectorXd peak = block.colwise().maxCoeff();
      block.rowwise() -= peak;
      block = block.array().exp();
      const Eigen::RowVectorXd total = block.colwise().sum();
      for (Eigen::Index s = 0; s < ek; ++s) {
        block.row(s).array() /= total.array();
        const Index n = nbr[static_cast<std::size_t>(j * ek + s)];
        out.row(j) += block.row(s).cwiseProduct(v.row(n));
      }
    }
    if (cache) {
      cache->rel_pos = std::move(rel);
      cache->pos_hidden = std::move(pos_hidden);
      cache->combined = std::move(combined);
      cache->attn_hidden = std::move(attn_hidden);
      cache->weights = std::move(w);
    }
  }
  if (cache) {
    cache->neighbors_per_row = kk;
    cache->neighbors = std::move(nbr);
    cache->input = x;
    cache->query = q;
    cache->key = key;
    cache->value = v;
  }
  return out;
}

Matrix attention_backward(const AttentionParams& params,
                          const AttentionCache& cache, const Matrix& d_out,
                          AttentionParams& grad) {
  const Eigen::Index m = d_out.rows();
  const Eigen::Index f = d_out.cols();
  const auto ek = static_cast<Eigen::Index>(cache.neighbors_per_row);
  const auto& nbr = cache.neighbors;

  Matrix dq = Matrix::Zero(m, f);
  Matrix dk = Matrix::Zero(m, f);
  Matrix dv = Matrix::Zero(m, f);
  Matrix d_logits(m * ek, f);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto w = cache.weights.middleRows(j * ek, ek);
    Matrix dw(ek, f);
    for (Eigen::Index s = 0; s < ek; ++s) {
      const Index n = nbr[static_cast<std::size_t>(j * ek + s)];
      dw.row(s) = d_out.row(j).cwiseProduct(cache.value.row(n));
      dv.row(n) += w.row(s).cwiseProduct(d_out.row(j));
    }
    const Eigen::RowVectorXd expected = w.cwiseProduct(dw).colwise().sum();
    for (Eigen::Index s = 0; s < ek; ++s) {
      d_logits.row(j * ek + s) = w.row(s).cwiseProduct(dw.row(s) - expected);
    }
  }

  Matrix d_attn_hidden =
      params.attn_out.backward(cache.attn_hidden, d_logits, grad.attn_out);
  d_attn_hidden = relu_backward(cache.attn_hidden, d_attn_hidden);
  const Matrix d_combined = params.attn_hidden.backward(
      cache.combined, d_attn_hidden, grad.attn_hidden);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index s = 0; s < ek; ++s) {
      const Index n = nbr[static_cast<std::size_t>(j * ek + s)];
      dq.row(j) += d_combined.row(j * ek + s);
      dk.row(n) -= d_combined.row(j * ek + s);
    }
  }
  Matrix d_pos_hidden =
      params.pos_out.backward(cache.pos_hidden, d_combined, grad.pos_out);
  d_pos_hidden = relu_backward(cache.pos_hidden, d_pos_hidden);
  params.pos_hidden.accumulate(cache.rel_pos, d_pos_hidden, grad.pos_hidden);

  Matrix dx = d_out;
  dx += params.query.backward(cache.input, dq, grad.query);
  dx += params.key.backward(cache.input, dk, grad.key);
  dx += params.value.backward(cache.input, dv, grad.value);
  return dx;
}

EncoderResult encode(const ScaleModel& model, const ScaleInput& input,
                     EncoderCache* cache, OpCounters* counters) {
  const BackboneConfig& cfg = model.backbone();
  const PointCloud& cloud = input.cloud;
  if (cloud.empty()) throw InputError("encode: empty partition");
  if (cfg.encoder_stages > 1 && !(input.base_voxel > 0.0)) {
    throw InputError("encode: base voxel size must be positive");
  }
  const auto n = static_cast<Eigen::Index>(cloud.size());
  Matrix x(n, kInputChannels);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) {
      x(i, a) = cloud.positions()[i][a];
      x(i, 3 + a) = cloud.colors()[i][a];
    }
  }
  const ScaleParams& p = model.params();
  EncoderLevel level{cloud.positions(), relu(p.embed.forward(x))};
  if (cache) {
    *cache = EncoderCache{};
    cache->input = std::move(x);
    cache->embedded = level.features;
  }

  EncoderResult result;
  result.scale_id = input.scale_id;
  for (int t = 0; t < cfg.encoder_stages; ++t) {
    if (t > 0) {
      const double voxel = input.base_voxel * std::pow(cfg.downsample_factor, t);
      PoolMap map = grid_pool_map(level.positions, voxel);
      level = grid_pool(level, map);
      if (cache) cache->pools.push_back(std::move(map));
    }
    AttentionCache* ac = cache ? &cache->attention.emplace_back() : nullptr;
    level.features = attention_forward(
        p.attention[static_cast<std::size_t>(t)], level.positions,
        level.features, static_cast<std::size_t>(cfg.attention_neighbors),
        cfg.knn, ac, counters);
    result.levels.push_back(level);
  }
  return result;
}

std::vector<std::uint16_t> argmax_rows(const Matrix& logits) {
  std::vector<std::uint16_t> labels(static_cast<std::size_t>(logits.rows()), 0);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(i, c) > logits(i, best)) best = c;
    }
    labels[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(best);
  }
  return labels;
}

Prediction decode(const ScaleModel& model, const FeatureMatrix& fused,
                  const EncoderResult& encoded, DecoderCache* cache,
                  OpCounters* counters) {
  const BackboneConfig& cfg = model.backbone();
  if (fused.rows() == 0 || fused.features.rows() == 0) {
    throw InputError("decode: empty fused features");
  }
  if (fused.scale_id != encoded.scale_id) {
    throw InputError("decode: fused features belong to scale " +
                     std::to_string(fused.scale_id) + ", partition to scale " +
                     std::to_string(encoded.scale_id));
  }
  const auto stages = static_cast<std::ptrdiff_t>(encoded.levels.size());
  const ScaleParams& p = model.params();
  if (cache) {
    *cache = DecoderCache{};
    const auto n = static_cast<std::size_t>(std::max<std::ptrdiff_t>(stages - 1, 0));
    cache->interp.resize(n);
    cache->interpolated.resize(n);
    cache->skip_input.resize(n);
    cache->stage_output.resize(n);
  }

  Matrix h = fused.features;
  std::vector<Vec3> source = fused.positions;
  for (std::ptrdiff_t t = stages - 1; t >= 1; --t) {
    const EncoderLevel& target = encoded.levels[static_cast<std::size_t>(t - 1)];
    const NeighborIndex index(std::move(source), cfg.knn);
    InterpMap map = interpolation_map(
        index, target.positions, static_cast<std::size_t>(cfg.interp_neighbors));
    if (counters) counters->distance_evals += index.distance_evaluations();
    Matrix interpolated = interpolate(h, map);
    const DecoderStageParams& d = p.decoder[static_cast<std::size_t>(t - 1)];
    h = relu(Matrix(d.up.forward(interpolated) + d.skip.forward(target.features)));
    if (cache) {
      const auto i = static_cast<std::size_t>(t - 1);
      cache->interp[i] = std::move(map);
      cache->interpolated[i] = std::move(interpolated);
      cache->skip_input[i] = target.features;
      cache->stage_output[i] = h;
    }
    source = target.positions;
  }

  Matrix hidden = relu(p.head_hidden.forward(h));
  Prediction pred;
  pred.logits = p.head_out.forward(hidden);
  pred.labels = argmax_rows(pred.logits);
  if (cache) {
    cache->head_input = std::move(h);
    cache->head_hidden = std::move(hidden);
  }
  return pred;
}

Prediction forward(const ScaleModel& model, const ScaleInput& input,
                   const FeatureStore* store, bool use_fusion, Tape* tape,
                   OpCounters* counters, FeatureMatrix* fused_out) {
  if (tape) *tape = Tape{};
  const EncoderResult encoded =
      encode(model, input, tape ? &tape->encoder : nullptr, counters);
  FeatureMatrix fused = encoded.features();
  const bool do_fuse = use_fusion && model.has_fusion();
  if (do_fuse) {
    if (store == nullptr || store->empty()) {
      throw InvariantError("forward: fusion requested without a feature store");
    }
    FusionCache* fc = tape ? &tape->fusion.emplace() : nullptr;
    fused = fuse(*store, fused, *model.params().fusion, *model.fusion_config(),
                 model.backbone().knn, fc, counters);
  }
  Prediction pred =
      decode(model, fused, encoded, tape ? &tape->decoder : nullptr, counters);
  if (tape) {
    tape->store = do_fuse ? store : nullptr;
    tape->recorded = true;
  }
  if (fused_out) *fused_out = std::move(fused);
  return pred;
}

std::optional<ScaleParams> backward(const ScaleModel& model, const Tape& tape,
                                    const Matrix& d_logits) {
  if (!tape.recorded) {
    throw InvariantError("backward: no recorded forward pass");
  }
  if (model.frozen()) return std::nullopt;
  const ScaleParams& p = model.params();
  ScaleParams g = p.zeros_like();
  const DecoderCache& dec = tape.decoder;
  const EncoderCache& enc = tape.encoder;
  const std::size_t stages = enc.attention.size();

  Matrix d_hidden = p.head_out.backward(dec.head_hidden, d_logits, g.head_out);
  d_hidden = relu_backward(dec.head_hidden, d_hidden);
  Matrix dh = p.head_hidden.backward(dec.head_input, d_hidden, g.head_hidden);

  std::vector<Matrix> d_level(stages);
  for (std::size_t t = 0; t < stages; ++t) {
    d_level[t] = Matrix::Zero(enc.attention[t].input.rows(),
                              enc.attention[t].input.cols());
  }
  for (std::size_t t = 1; t < stages; ++t) {
    const std::size_t i = t - 1;
    const DecoderStageParams& d = p.decoder[i];
    dh = relu_backward(dec.stage_output[i], dh);
    d_level[i] += d.skip.backward(dec.skip_input[i], dh, g.decoder[i].skip);
    const Matrix d_interp = d.up.backward(dec.interpolated[i], dh, g.decoder[i].up);
    dh = interpolate_backward(d_interp, dec.interp[i], d_level[t].rows());
  }

  if (tape.fusion) {
    d_level[stages - 1] += fuse_backward(*tape.store, *p.fusion, *tape.fusion,
                                         dh, *g.fusion);
  } else {
    d_level[stages - 1] += dh;
  }

  for (std::size_t t = stages; t-- > 0;) {
    const Matrix dx =
        attention_backward(p.attention[t], enc.attention[t], d_level[t], g.attention[t]);
    if (t > 0) {
      d_level[t - 1] += unpool(dx, enc.pools[t - 1]);
    } else {
      const Matrix d_embed = relu_backward(enc.embedded, dx);
      p.embed.accumulate(enc.input, d_embed, g.embed);
    }
  }
  return g;
}

}  // namespace scalseg
