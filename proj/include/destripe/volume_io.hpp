#pragma once

#include "destripe/volume.hpp"

#include <filesystem>

namespace destripe {

enum class VolumeFormat { tiff_multipage, raw_f32 };

/// `.tif`/`.tiff` select TIFF, everything else the raw float32 format.
VolumeFormat format_from_path(const std::filesystem::path& path);

/// Path of the JSON sidecar describing a raw file: `<path>.json`.
std::filesystem::path sidecar_path(const std::filesystem::path& path);

/// Raw volumes are little-endian IEEE-754 float32 in z, y, x order with a
/// JSON sidecar {shape, dtype, order, voxel_spacing, stripe_axis}. TIFF input
/// may be uncompressed 8/16-bit grayscale (scaled to [0, 1]) or 32-bit float.
Volume load_volume(const std::filesystem::path& path, VolumeFormat format);
Volume load_volume(const std::filesystem::path& path);

/// TIFF output is always 32-bit float, one page per slice; spacing and
/// stripe axis travel in the first page's ImageDescription.
void save_volume(const Volume& volume, const std::filesystem::path& path, VolumeFormat format);
void save_volume(const Volume& volume, const std::filesystem::path& path);

/// Binary masks as raw uint8 (0/1) with a sidecar whose dtype is "uint8".
void save_mask(const MaskGrid& mask, const std::filesystem::path& path);
MaskGrid load_mask(const std::filesystem::path& path);

}  // namespace destripe
