#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scalseg/backbone.hpp"

namespace scalseg {

// Versioned binary container: magic "RSCK", format version, the model
// configuration, then named float64 tensors with (rows, cols) headers. All
// integers and reals are little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<char> serialize_checkpoint(const ScaleModel& model);
// Throws InputError on malformed or truncated data.
ScaleModel deserialize_checkpoint(const std::vector<char>& bytes);

void save_checkpoint(const ScaleModel& model, const std::filesystem::path& path);
ScaleModel load_checkpoint(const std::filesystem::path& path);

// FNV-1a over the serialized checkpoint.
std::uint64_t checkpoint_checksum(const ScaleModel& model);

}  // namespace scalseg
