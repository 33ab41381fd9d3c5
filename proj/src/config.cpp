#include "scalseg/config.hpp"

#include <charconv>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "scalseg/error.hpp"

namespace scalseg {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& value, const std::string& where) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("config: bad numeric value '" + value + "'" + where);
  }
  return out;
}

bool parse_bool(const std::string& value, const std::string& where) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw ConfigError("config: bad boolean '" + value + "'" + where);
}

std::vector<double> parse_list(const std::string& value, const std::string& where) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    auto end = value.find(',', start);
    if (end == std::string::npos) end = value.size();
    out.push_back(parse_number<double>(trim(std::string_view(value).substr(start, end - start)), where));
    start = end + 1;
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  partition.validate();
  backbone.validate();
  fusion.validate();
  train.validate();
  if (fusion.feature_dim != backbone.feature_dim) {
    throw ConfigError("config: fusion feature_dim must equal backbone feature_dim");
  }
}

void RunConfig::apply_seed(std::uint64_t seed) {
  partition.rng_seed = seed;
  backbone.init_seed = seed;
  train.rng_seed = seed;
}

std::optional<FusionConfig> RunConfig::fusion_for_models() const {
  if (!fusion_enabled) return std::nullopt;
  return fusion;
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = " (line " + std::to_string(line_no) + ")";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config: expected key=value" + where);
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (value.empty()) throw ConfigError("config: empty value for '" + key + "'" + where);

    if (key == "voxel_sizes") {
      cfg.partition.voxel_sizes = parse_list(value, where);
    } else if (key == "partition_seed") {
      cfg.partition.rng_seed = parse_number<std::uint64_t>(value, where);
    } else if (key == "feature_dim") {
      cfg.backbone.feature_dim = parse_number<int>(value, where);
    } else if (key == "attention_neighbors") {
      cfg.backbone.attention_neighbors = parse_number<int>(value, where);
    } else if (key == "encoder_stages") {
      cfg.backbone.encoder_stages = parse_number<int>(value, where);
    } else if (key == "downsample_factor") {
      cfg.backbone.downsample_factor = parse_number<double>(value, where);
    } else if (key == "num_classes") {
      cfg.backbone.num_classes = parse_number<int>(value, where);
    } else if (key == "interp_neighbors") {
      cfg.backbone.interp_neighbors = parse_number<int>(value, where);
    } else if (key == "knn") {
      if (value == "kdtree") {
        cfg.backbone.knn = SearchStrategy::kKdTree;
      } else if (value == "linear") {
        cfg.backbone.knn = SearchStrategy::kLinearScan;
      } else {
        throw ConfigError("config: knn must be 'kdtree' or 'linear'" + where);
      }
    } else if (key == "init_seed") {
      cfg.backbone.init_seed = parse_number<std::uint64_t>(value, where);
    } else if (key == "k_fuse") {
      cfg.fusion.k_fuse = parse_number<int>(value, where);
    } else if (key == "fusion") {
      cfg.fusion_enabled = parse_bool(value, where);
    } else if (key == "epochs") {
      cfg.train.epochs = parse_number<int>(value, where);
    } else if (key == "batch_size") {
      cfg.train.batch_size = parse_number<int>(value, where);
    } else if (key == "learning_rate") {
      cfg.train.learning_rate = parse_number<double>(value, where);
    } else if (key == "momentum") {
      cfg.train.momentum = parse_number<double>(value, where);
    } else if (key == "grad_clip") {
      cfg.train.grad_clip = parse_number<double>(value, where);
    } else if (key == "train_seed") {
      cfg.train.rng_seed = parse_number<std::uint64_t>(value, where);
    } else {
      throw ConfigError("config: unknown key '" + key + "'" + where);
    }
  }
  cfg.fusion.feature_dim = cfg.backbone.feature_dim;
  cfg.train.use_fusion = cfg.fusion_enabled;
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text);
}

}  // namespace scalseg
