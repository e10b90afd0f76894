#pragma once

#include <cstddef>
#include <cstdint>

#include "cbctseg/core.hpp"

namespace cbctseg {

// Values of a border-core map.
inline constexpr Label kBackground = 0;
inline constexpr Label kCore = 1;
inline constexpr Label kBorder = 2;

// A foreground voxel is border when any voxel within Chebyshev radius
// `border_width` holds another instance, background, or lies outside the
// volume; otherwise it is core.
LabelVolume encode_border_core(const LabelVolume& instances, std::size_t border_width = 1, unsigned threads = 1);

struct DecodeOptions {
  std::size_t min_orphan_size = 10;
};

struct DecodeResult {
  LabelVolume instances;
  std::size_t core_instances = 0;     // ids 1..core_instances
  std::size_t promoted_orphans = 0;   // ids after the core instances
  std::size_t dropped_orphans = 0;
  std::size_t dropped_voxels = 0;
};

// Core: 26-connected components numbered by smallest linear index.
// Border voxels take the id of the nearest core along 6-connected
// foreground paths (equal distance: lower id). Border components no core
// reaches (26-connected) become instances when large enough, otherwise
// they are dropped.
DecodeResult decode_border_core(const LabelVolume& border_core, const DecodeOptions& opts = {});

}  // namespace cbctseg
