#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cbctseg/core.hpp"

namespace cbctseg {

using Extent3 = std::array<std::size_t, 3>;

struct PlanRequest {
  Extent3 patch_size{};
  std::optional<Extent3> median_image_size;
  std::size_t min_edge = 4;
  std::size_t max_features = 320;
  std::size_t base_features = 32;
  std::vector<std::size_t> encoder_blocks_schedule{1, 3, 4, 6, 6, 6};
  std::vector<int> mirror_axes{0, 1, 2};
  NormalizationScheme normalization = kToothFairy2Ct;
  std::size_t batch_size = 2;
  std::size_t epochs = 1000;

  void validate() const;
};

// Generated baseline configuration and the enlarged one with the
// left/right axis (2) excluded from mirroring.
PlanRequest baseline_request();
PlanRequest toothfairy2_request();

struct NetworkPlan {
  Extent3 patch_size{};  // divisible by bottleneck_stride
  std::size_t n_stages = 0;
  std::vector<Extent3> strides;  // per stage; stage 0 is (1,1,1)
  Extent3 bottleneck_stride{};
  std::vector<std::size_t> features_per_stage;
  std::vector<std::size_t> encoder_blocks;
  std::vector<std::size_t> decoder_convs;  // one per decoder stage (n_stages - 1)
  std::vector<int> mirror_axes;
  NormalizationScheme normalization = kToothFairy2Ct;
  std::size_t batch_size = 0;
  std::size_t epochs = 0;

  // Checks the internal consistency of a plan (e.g. one read from disk).
  void validate() const;
  std::string to_json_text() const;  // sorted keys, stable formatting
  static NetworkPlan from_json_text(std::string_view text);
  static NetworkPlan load(const std::filesystem::path& path);

  friend bool operator==(const NetworkPlan&, const NetworkPlan&) = default;
};

// Stride-2 pooling on an axis repeats while its extent (halved with
// truncation) is > 2·min_edge; n_stages = 1 + the largest per-axis pool
// count. The plan's patch is the requested one rounded up to a multiple of
// the bottleneck stride.
Extent3 pool_counts(const Extent3& patch, std::size_t min_edge);
NetworkPlan plan_topology(const PlanRequest& req);

// One warning per axis where the patch exceeds the median image size.
std::vector<std::string> validate_patch_size(const Extent3& patch, const Extent3& median);

void emit_plan(const NetworkPlan& plan, const std::filesystem::path& path);

}  // namespace cbctseg
