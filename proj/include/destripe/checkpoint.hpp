#pragma once

#include "destripe/network.hpp"

#include "json.hpp"

#include <filesystem>
#include <vector>

namespace destripe {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ParameterLayout layout;
  std::vector<double> params;
  nlohmann::json manifest;  // contents of `<path>.json`, empty when absent
};

/// Binary blob: "DSTRIPE\0", u32 version, u32 block count, then per block
/// u32 name length, name, u64 rows, u64 cols and rows * cols little-endian
/// float64 values. A JSON manifest with the block table and `extra` goes to
/// `<path>.json`.
void save_checkpoint(const std::filesystem::path& path, const ParameterLayout& layout,
                     std::span<const double> params, const nlohmann::json& extra = {});

/// Throws IoError for unreadable files and ValidationError for a bad magic,
/// unknown version or truncated data.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace destripe
