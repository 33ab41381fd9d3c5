#include <string>

#include "scalseg/backbone.hpp"
#include "scalseg/error.hpp"

namespace scalseg {

void BackboneConfig::validate() const {
  if (feature_dim < 1) throw ConfigError("backbone: feature_dim must be >= 1");
  if (attention_neighbors < 1) {
    throw ConfigError("backbone: attention_neighbors must be >= 1");
  }
  if (encoder_stages < 1) {
    throw ConfigError("backbone: encoder_stages must be >= 1");
  }
  if (!(downsample_factor > 1.0)) {
    throw ConfigError("backbone: downsample_factor must be > 1");
  }
  if (num_classes < 1) throw ConfigError("backbone: num_classes must be >= 1");
  if (interp_neighbors < 1) {
    throw ConfigError("backbone: interp_neighbors must be >= 1");
  }
}

namespace {

template <typename Params, typename Fn>
void visit_params(Params& p, Fn&& fn) {
  auto dense = [&](const std::string& name, auto& d) {
    fn(name + ".weight", d.weight);
    fn(name + ".bias", d.bias);
  };
  dense("embed", p.embed);
  for (std::size_t t = 0; t < p.attention.size(); ++t) {
    auto& a = p.attention[t];
    const std::string pre = "attention." + std::to_string(t) + ".";
    dense(pre + "query", a.query);
    dense(pre + "key", a.key);
    dense(pre + "value", a.value);
    dense(pre + "pos_hidden", a.pos_hidden);
    dense(pre + "pos_out", a.pos_out);
    dense(pre + "attn_hidden", a.attn_hidden);
    dense(pre + "attn_out", a.attn_out);
  }
  for (std::size_t t = 0; t < p.decoder.size(); ++t) {
    const std::string pre = "decoder." + std::to_string(t) + ".";
    dense(pre + "up", p.decoder[t].up);
    dense(pre + "skip", p.decoder[t].skip);
  }
  dense("head.hidden", p.head_hidden);
  dense("head.out", p.head_out);
  if (p.fusion) {
    dense("fusion.pointwise", p.fusion->pointwise);
    dense("fusion.combine", p.fusion->combine);
  }
}

ScaleParams shaped_params(const BackboneConfig& cfg, bool with_fusion) {
  const int f = cfg.feature_dim;
  ScaleParams p;
  p.embed = Dense(kInputChannels, f);
  for (int t = 0; t < cfg.encoder_stages; ++t) {
    AttentionParams a;
    a.query = Dense(f, f);
    a.key = Dense(f, f);
    a.value = Dense(f, f);
    a.pos_hidden = Dense(3, f);
    a.pos_out = Dense(f, f);
    a.attn_hidden = Dense(f, f);
    a.attn_out = Dense(f, f);
    p.attention.push_back(std::move(a));
  }
  for (int t = 1; t < cfg.encoder_stages; ++t) {
    p.decoder.push_back({Dense(f, f), Dense(f, f)});
  }
  p.head_hidden = Dense(f, f);
  p.head_out = Dense(f, cfg.num_classes);
  if (with_fusion) p.fusion = FusionParams(f);
  return p;
}

}  // namespace

void ScaleParams::for_each(
    const std::function<void(const std::string&, Matrix&)>& fn) {
  visit_params(*this, fn);
}

void ScaleParams::for_each(
    const std::function<void(const std::string&, const Matrix&)>& fn) const {
  visit_params(*this, fn);
}

ScaleParams ScaleParams::zeros_like() const {
  ScaleParams z = *this;
  z.for_each([](const std::string&, Matrix& m) { m.setZero(); });
  return z;
}

std::size_t ScaleParams::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Matrix& m) {
    n += static_cast<std::size_t>(m.size());
  });
  return n;
}

ScaleModel ScaleModel::initialize(int scale_id, const BackboneConfig& backbone,
                                  std::optional<FusionConfig> fusion) {
  backbone.validate();
  if (scale_id < 1) throw ConfigError("scale ids start at 1");
  if (scale_id == 1) fusion.reset();
  if (fusion) {
    fusion->validate();
    if (fusion->feature_dim != backbone.feature_dim) {
      throw ConfigError("fusion feature_dim must match backbone feature_dim");
    }
  }
  ScaleModel m;
  m.scale_id_ = scale_id;
  m.backbone_ = backbone;
  m.fusion_ = fusion;
  m.params_ = shaped_params(backbone, fusion.has_value());

  std::mt19937_64 rng(
      mix64(backbone.init_seed ^ mix64(static_cast<std::uint64_t>(scale_id))));
  auto& p = m.params_;
  p.embed.init_uniform(rng);
  for (auto& a : p.attention) {
    for (Dense* d : {&a.query, &a.key, &a.value, &a.pos_hidden, &a.pos_out,
                     &a.attn_hidden, &a.attn_out}) {
      d->init_uniform(rng);
    }
  }
  for (auto& d : p.decoder) {
    d.up.init_uniform(rng);
    d.skip.init_uniform(rng);
  }
  p.head_hidden.init_uniform(rng);
  p.head_out.init_uniform(rng);
  if (p.fusion) init_fusion_params(*p.fusion, rng);
  return m;
}

ScaleModel ScaleModel::from_parts(int scale_id, const BackboneConfig& backbone,
                                  std::optional<FusionConfig> fusion,
                                  ScaleParams params, bool frozen) {
  backbone.validate();
  if (scale_id < 1) throw ConfigError("scale ids start at 1");
  if (fusion) fusion->validate();
  const ScaleParams expected = shaped_params(backbone, fusion.has_value());
  std::vector<std::pair<std::string, std::pair<Eigen::Index, Eigen::Index>>> want;
  expected.for_each([&](const std::string& name, const Matrix& m) {
    want.push_back({name, {m.rows(), m.cols()}});
  });
  std::size_t i = 0;
  bool ok = true;
  params.for_each([&](const std::string& name, const Matrix& m) {
    if (i >= want.size() || want[i].first != name ||
        want[i].second != std::make_pair(m.rows(), m.cols())) {
      ok = false;
    }
    ++i;
  });
  if (!ok || i != want.size()) {
    throw ConfigError("model parameters do not match the configured shapes");
  }
  ScaleModel m;
  m.scale_id_ = scale_id;
  m.backbone_ = backbone;
  m.fusion_ = fusion;
  m.params_ = std::move(params);
  m.frozen_ = frozen;
  return m;
}

ScaleParams& ScaleModel::mutable_params() {
  if (frozen_) {
    throw InvariantError("scale " + std::to_string(scale_id_) +
                         " is frozen and rejects parameter updates");
  }
  return params_;
}

}  // namespace scalseg
