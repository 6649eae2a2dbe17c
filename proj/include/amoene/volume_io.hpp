#pragma once

// On-disk volume container: a JSON sidecar describing the grid plus a raw
// little-endian voxel file next to it.

#include <filesystem>

#include "amoene/volume.hpp"

namespace amoene {

// Writes <path> (sidecar) and <path stem>.raw. Intensities are stored as f32.
void write_volume(const std::filesystem::path& sidecar, const Volume& vol);
void write_mask(const std::filesystem::path& sidecar, const Mask& mask);

Volume read_volume(const std::filesystem::path& sidecar);
Mask read_mask(const std::filesystem::path& sidecar);

}  // namespace amoene
