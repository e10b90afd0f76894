#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "cbctseg/core.hpp"

namespace cbctseg {

// Per-class probabilities, channel-major: value of channel c at voxel i is
// data[c * dims.count() + i]. Channel 0 is background.
struct ProbabilityStack {
  Dims dims;
  Spacing spacing;
  std::size_t channels = 0;
  std::vector<double> data;

  ProbabilityStack() = default;
  ProbabilityStack(const Dims& d, const Spacing& s, std::size_t c);

  double at(std::size_t channel, std::size_t voxel) const { return data[channel * dims.count() + voxel]; }
  double& at(std::size_t channel, std::size_t voxel) { return data[channel * dims.count() + voxel]; }
};

// Most frequent label per voxel. `priority` is a permutation of input
// indices; ties go to the earliest entry in it that voted for a tied label.
LabelVolume majority_vote(std::span<const LabelVolume> preds, std::span<const std::size_t> priority,
                          unsigned threads = 1);

// Channel sums must be within `tolerance` of 1.
void check_normalized(const ProbabilityStack& s, double tolerance = 1e-3);

// Mean over models per channel, then argmax (ties to the lowest channel).
LabelVolume average_argmax(std::span<const ProbabilityStack> stacks, unsigned threads = 1);

// 4D NIfTI (nx, ny, nz, C) plus a sidecar <stem>.json declaring
// {"layout": "channel-major", "channels": C}.
std::filesystem::path sidecar_path(const std::filesystem::path& image);
ProbabilityStack read_probability_stack(const std::filesystem::path& path);
void write_probability_stack(const ProbabilityStack& s, const std::filesystem::path& path);

}  // namespace cbctseg
