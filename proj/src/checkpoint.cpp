#include "scalseg/checkpoint.hpp"

#include <fstream>
#include <iterator>

#include "binary_io.hpp"
#include "scalseg/error.hpp"

namespace scalseg {
namespace {

constexpr std::string_view kMagic = "RSCK";

[[noreturn]] void truncated(const std::string& what) {
  throw InputError("checkpoint: truncated data while reading " + what);
}

}  // namespace

std::vector<char> serialize_checkpoint(const ScaleModel& model) {
  detail::ByteWriter w;
  w.put_raw(kMagic);
  w.put_u32(kCheckpointVersion);
  const BackboneConfig& b = model.backbone();
  w.put_i32(model.scale_id());
  w.put_u8(model.frozen() ? 1 : 0);
  w.put_i32(b.feature_dim);
  w.put_i32(b.attention_neighbors);
  w.put_i32(b.encoder_stages);
  w.put_f64(b.downsample_factor);
  w.put_i32(b.num_classes);
  w.put_i32(b.interp_neighbors);
  w.put_u8(b.knn == SearchStrategy::kKdTree ? 0 : 1);
  w.put_u64(b.init_seed);
  w.put_u8(model.has_fusion() ? 1 : 0);
  if (model.has_fusion()) {
    w.put_i32(model.fusion_config()->k_fuse);
    w.put_i32(model.fusion_config()->feature_dim);
  }
  std::uint32_t count = 0;
  model.params().for_each([&](const std::string&, const Matrix&) { ++count; });
  w.put_u32(count);
  model.params().for_each([&](const std::string& name, const Matrix& m) {
    w.put_string(name);
    w.put_u64(static_cast<std::uint64_t>(m.rows()));
    w.put_u64(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) w.put_f64(m.data()[i]);
  });
  return w.bytes();
}

ScaleModel deserialize_checkpoint(const std::vector<char>& bytes) {
  detail::ByteReader r(std::string_view(bytes.data(), bytes.size()));
  std::string magic;
  if (!r.get_raw(4, magic)) truncated("magic");
  if (magic != kMagic) throw InputError("checkpoint: bad magic (expected RSCK)");
  std::uint32_t version = 0;
  if (!r.get_u32(version)) truncated("version");
  if (version != kCheckpointVersion) {
    throw InputError("checkpoint: unsupported version " + std::to_string(version));
  }
  std::int32_t scale_id = 0;
  std::uint8_t frozen = 0;
  std::uint8_t knn = 0;
  std::uint8_t has_fusion = 0;
  BackboneConfig b;
  if (!r.get_i32(scale_id) || !r.get_u8(frozen) || !r.get_i32(b.feature_dim) ||
      !r.get_i32(b.attention_neighbors) || !r.get_i32(b.encoder_stages) ||
      !r.get_f64(b.downsample_factor) || !r.get_i32(b.num_classes) ||
      !r.get_i32(b.interp_neighbors) || !r.get_u8(knn) ||
      !r.get_u64(b.init_seed) || !r.get_u8(has_fusion)) {
    truncated("configuration");
  }
  if (knn > 1) throw InputError("checkpoint: unknown search strategy");
  b.knn = knn == 0 ? SearchStrategy::kKdTree : SearchStrategy::kLinearScan;
  std::optional<FusionConfig> fusion;
  if (has_fusion) {
    fusion.emplace();
    if (!r.get_i32(fusion->k_fuse) || !r.get_i32(fusion->feature_dim)) {
      truncated("fusion configuration");
    }
  }

  // Shapes come from the configuration; stored names and shapes must agree.
  ScaleParams params;
  try {
    params = ScaleModel::initialize(scale_id, b, fusion).params();
  } catch (const ConfigError& e) {
    throw InputError(std::string("checkpoint: invalid configuration: ") + e.what());
  }
  std::uint32_t count = 0;
  if (!r.get_u32(count)) truncated("tensor count");
  std::uint32_t seen = 0;
  params.for_each([&](const std::string& expected, Matrix& m) {
    ++seen;
    if (seen > count) {
      throw InputError("checkpoint: missing tensor " + expected);
    }
    std::string name;
    std::uint64_t rows = 0;
    std::uint64_t cols = 0;
    if (!r.get_string(name) || !r.get_u64(rows) || !r.get_u64(cols)) {
      truncated("tensor header");
    }
    if (name != expected) {
      throw InputError("checkpoint: expected tensor " + expected + ", found " + name);
    }
    if (rows != static_cast<std::uint64_t>(m.rows()) ||
        cols != static_cast<std::uint64_t>(m.cols())) {
      throw InputError("checkpoint: shape mismatch for tensor " + name);
    }
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      if (!r.get_f64(m.data()[i])) truncated("tensor " + name);
    }
  });
  if (seen != count) throw InputError("checkpoint: unexpected extra tensors");
  if (r.remaining() != 0) throw InputError("checkpoint: trailing bytes");
  try {
    return ScaleModel::from_parts(scale_id, b, fusion, std::move(params), frozen != 0);
  } catch (const ConfigError& e) {
    throw InputError(std::string("checkpoint: inconsistent model: ") + e.what());
  }
}

void save_checkpoint(const ScaleModel& model, const std::filesystem::path& path) {
  const std::vector<char> bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("checkpoint: cannot open " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("checkpoint: write failed for " + path.string());
}

ScaleModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("checkpoint: cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

std::uint64_t checkpoint_checksum(const ScaleModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : serialize_checkpoint(model)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace scalseg
