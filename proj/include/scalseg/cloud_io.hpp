#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "scalseg/cloud.hpp"
#include "scalseg/error.hpp"

namespace scalseg {

// Binary layout (little-endian):
//   "RSPC" | u32 version | u64 point count | u8 has_labels | u16 num_classes
//   per point: f64 x y z | u8 r g b | u16 label (when has_labels)
// ASCII twin: one point per line "x y z r g b [label]" with 8-bit colors,
// optionally preceded by a "# num_classes <n>" line.
enum class CloudFormat { kBinary, kAscii };

inline constexpr std::uint32_t kCloudVersion = 1;

class CloudFormatError : public InputError {
 public:
  enum class Kind {
    kIo,
    kBadMagic,
    kBadVersion,
    kTruncatedHeader,
    kTruncatedRecord,
    kTrailingData,
    kLabelOutOfRange,
    kBadField,
    kInconsistentColumns,
    kColorOutOfRange,
    kNonFinite,
  };

  CloudFormatError(Kind kind, const std::string& message)
      : InputError(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::vector<char> encode_binary(const PointCloud& cloud);
PointCloud decode_binary(std::string_view bytes);
std::string encode_ascii(const PointCloud& cloud);
PointCloud decode_ascii(std::string_view text);

// ".rspc" and ".bin" are binary, everything else ASCII.
CloudFormat format_for_path(const std::filesystem::path& path);

void write_cloud(const PointCloud& cloud, const std::filesystem::path& path,
                 CloudFormat format);
// Binary when the file starts with the magic, ASCII otherwise.
PointCloud read_cloud(const std::filesystem::path& path);

}  // namespace scalseg
