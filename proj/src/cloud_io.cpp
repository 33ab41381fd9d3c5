#include "scalseg/cloud_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "binary_io.hpp"

namespace scalseg {
namespace {

using Kind = CloudFormatError::Kind;
constexpr std::string_view kMagic = "RSPC";

std::uint8_t to_byte(double c) {
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

std::string point_label(std::size_t i) { return " (point " + std::to_string(i) + ")"; }

// Rebuilds the cloud, turning constructor failures into format errors.
PointCloud assemble(std::vector<Vec3> pos, std::vector<Vec3> col,
                    std::optional<std::vector<std::uint16_t>> labels,
                    int num_classes) {
  if (labels) {
    for (std::size_t i = 0; i < labels->size(); ++i) {
      if ((*labels)[i] >= num_classes) {
        throw CloudFormatError(Kind::kLabelOutOfRange,
                               "label " + std::to_string((*labels)[i]) +
                                   " >= num_classes " + std::to_string(num_classes) +
                                   point_label(i));
      }
    }
  }
  for (std::size_t i = 0; i < pos.size(); ++i) {
    for (double c : pos[i]) {
      if (!std::isfinite(c)) {
        throw CloudFormatError(Kind::kNonFinite, "non-finite coordinate" + point_label(i));
      }
    }
  }
  return PointCloud(std::move(pos), std::move(col), std::move(labels), num_classes);
}

}  // namespace

std::vector<char> encode_binary(const PointCloud& cloud) {
  detail::ByteWriter w;
  w.put_raw(kMagic);
  w.put_u32(kCloudVersion);
  w.put_u64(cloud.size());
  w.put_u8(cloud.has_labels() ? 1 : 0);
  w.put_u16(static_cast<std::uint16_t>(cloud.num_classes()));
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (double c : cloud.positions()[i]) w.put_f64(c);
    for (double c : cloud.colors()[i]) w.put_u8(to_byte(c));
    if (cloud.has_labels()) w.put_u16(cloud.labels()[i]);
  }
  return w.bytes();
}

PointCloud decode_binary(std::string_view bytes) {
  detail::ByteReader r(bytes);
  std::string magic;
  if (!r.get_raw(4, magic)) {
    throw CloudFormatError(Kind::kTruncatedHeader, "truncated header: missing magic");
  }
  if (magic != kMagic) {
    throw CloudFormatError(Kind::kBadMagic, "bad magic: not an RSPC cloud file");
  }
  std::uint32_t version = 0;
  std::uint64_t count = 0;
  std::uint8_t has_labels = 0;
  std::uint16_t num_classes = 0;
  if (!r.get_u32(version)) throw CloudFormatError(Kind::kTruncatedHeader, "truncated header");
  if (version != kCloudVersion) {
    throw CloudFormatError(Kind::kBadVersion,
                           "unsupported version " + std::to_string(version));
  }
  if (!r.get_u64(count) || !r.get_u8(has_labels) || !r.get_u16(num_classes)) {
    throw CloudFormatError(Kind::kTruncatedHeader, "truncated header");
  }
  const std::size_t record = 3 * 8 + 3 + (has_labels ? 2 : 0);
  if (count > r.remaining() / record) {
    throw CloudFormatError(Kind::kTruncatedRecord,
                           "truncated record: header declares " + std::to_string(count) +
                               " points, data holds " +
                               std::to_string(r.remaining() / record));
  }
  std::vector<Vec3> pos(count);
  std::vector<Vec3> col(count);
  std::optional<std::vector<std::uint16_t>> labels;
  if (has_labels) labels.emplace(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (double& c : pos[i]) r.get_f64(c);
    for (double& c : col[i]) {
      std::uint8_t b = 0;
      r.get_u8(b);
      c = b / 255.0;
    }
    if (labels) r.get_u16((*labels)[i]);
  }
  if (r.remaining() != 0) {
    throw CloudFormatError(Kind::kTrailingData,
                           "trailing data: " + std::to_string(r.remaining()) +
                               " bytes after the last record");
  }
  return assemble(std::move(pos), std::move(col), std::move(labels), num_classes);
}

std::string encode_ascii(const PointCloud& cloud) {
  std::string out;
  char buf[128];
  if (cloud.has_labels()) out += "# num_classes " + std::to_string(cloud.num_classes()) + "\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.positions()[i];
    const auto& c = cloud.colors()[i];
    int n = std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %u %u %u", p[0], p[1], p[2],
                          to_byte(c[0]), to_byte(c[1]), to_byte(c[2]));
    out.append(buf, static_cast<std::size_t>(n));
    if (cloud.has_labels()) out += " " + std::to_string(cloud.labels()[i]);
    out += '\n';
  }
  return out;
}

PointCloud decode_ascii(std::string_view text) {
  std::vector<Vec3> pos;
  std::vector<Vec3> col;
  std::vector<std::uint16_t> labels;
  int columns = 0;
  int declared_classes = -1;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const std::string where = " at line " + std::to_string(line_no);
    if (line[first] == '#') {
      std::istringstream hs(line.substr(first + 1));
      std::string key;
      int value = 0;
      if (hs >> key && key == "num_classes") {
        if (!(hs >> value) || value < 0) {
          throw CloudFormatError(Kind::kBadField, "bad num_classes header" + where);
        }
        declared_classes = value;
      }
      continue;
    }
    std::istringstream ls(line);
    std::vector<std::string> fields;
    for (std::string f; ls >> f;) fields.push_back(f);
    if (fields.size() != 6 && fields.size() != 7) {
      throw CloudFormatError(Kind::kBadField, "expected 6 or 7 fields, got " +
                                                  std::to_string(fields.size()) + where);
    }
    if (columns == 0) columns = static_cast<int>(fields.size());
    if (columns != static_cast<int>(fields.size())) {
      throw CloudFormatError(Kind::kInconsistentColumns,
                             "inconsistent column count" + where);
    }
    Vec3 p;
    for (int a = 0; a < 3; ++a) {
      const auto& f = fields[static_cast<std::size_t>(a)];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), p[a]);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw CloudFormatError(Kind::kBadField, "bad coordinate '" + f + "'" + where);
      }
      if (!std::isfinite(p[a])) {
        throw CloudFormatError(Kind::kNonFinite, "non-finite coordinate" + where);
      }
    }
    Vec3 c;
    for (int a = 0; a < 3; ++a) {
      const auto& f = fields[static_cast<std::size_t>(3 + a)];
      int v = 0;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw CloudFormatError(Kind::kBadField, "bad color '" + f + "'" + where);
      }
      if (v < 0 || v > 255) {
        throw CloudFormatError(Kind::kColorOutOfRange, "color outside 0..255" + where);
      }
      c[a] = v / 255.0;
    }
    if (columns == 7) {
      const auto& f = fields[6];
      unsigned v = 0;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size() || v > 0xffff) {
        throw CloudFormatError(Kind::kBadField, "bad label '" + f + "'" + where);
      }
      labels.push_back(static_cast<std::uint16_t>(v));
    }
    pos.push_back(p);
    col.push_back(c);
  }
  std::optional<std::vector<std::uint16_t>> opt_labels;
  int num_classes = 0;
  if (columns == 7) {
    int max_label = -1;
    for (auto l : labels) max_label = std::max<int>(max_label, l);
    num_classes = declared_classes >= 0 ? declared_classes : max_label + 1;
    opt_labels = std::move(labels);
  } else if (declared_classes >= 0) {
    num_classes = declared_classes;
  }
  return assemble(std::move(pos), std::move(col), std::move(opt_labels), num_classes);
}

CloudFormat format_for_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".rspc" || ext == ".bin") ? CloudFormat::kBinary : CloudFormat::kAscii;
}

void write_cloud(const PointCloud& cloud, const std::filesystem::path& path,
                 CloudFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CloudFormatError(Kind::kIo, "cannot open " + path.string() + " for writing");
  if (format == CloudFormat::kBinary) {
    const auto bytes = encode_binary(cloud);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  } else {
    const auto text = encode_ascii(cloud);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
  }
  if (!out) throw CloudFormatError(Kind::kIo, "write failed for " + path.string());
}

PointCloud read_cloud(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CloudFormatError(Kind::kIo, "cannot open " + path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.compare(0, kMagic.size(), kMagic) == 0) return decode_binary(data);
  return decode_ascii(data);
}

}  // namespace scalseg
