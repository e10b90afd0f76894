#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cbctseg/class_table.hpp"
#include "cbctseg/core.hpp"

namespace cbctseg {

// What HD95 reports when exactly one of prediction / reference is empty.
enum class PenaltyMode { image_diagonal, fixed };

struct MetricOptions {
  PenaltyMode penalty_mode = PenaltyMode::image_diagonal;
  double fixed_penalty_mm = 0.0;
  double percentile = 0.95;

  void validate() const;
  double penalty(const Dims& dims, const Spacing& spacing) const;
};

struct ClassMetrics {
  Label label_id = 0;
  double dice = 0.0;
  double hd95 = 0.0;
  bool gt_empty = false;
  bool pred_empty = false;
  friend bool operator==(const ClassMetrics&, const ClassMetrics&) = default;
};

struct CaseEvaluation {
  std::string case_id;
  std::vector<ClassMetrics> classes;  // ClassTable order
  friend bool operator==(const CaseEvaluation&, const CaseEvaluation&) = default;
};

// 2|A∩B| / (|A|+|B|); 1 when both are empty.
double dice(const Mask& pred, const Mask& gt);
double dice_from_counts(std::size_t intersection, std::size_t pred_count, std::size_t gt_count);

// Linear indices (ascending) of foreground voxels with a background or
// out-of-bounds 6-neighbour.
std::vector<std::size_t> extract_surface(const Mask& mask);
Mask surface_mask(const Mask& mask);

// Exact squared anisotropic Euclidean distance (mm²) to the nearest foreground
// voxel. For offset (dx,dy,dz) the value is (dx·sx)² + (dy·sy)² + (dz·sz)²,
// summed in that order, so results are bit-reproducible by brute force.
ScalarVolume edt_sq(const Mask& mask);
ScalarVolume edt_sq(const Mask& mask, const Spacing& spacing);

// Writes squared distances into `out` (same layout as `mask`); +inf if the
// mask is empty. Used by callers that work on cropped sub-volumes.
void edt_sq_into(std::span<const std::uint8_t> mask, const Dims& dims, const Spacing& spacing,
                 std::span<double> out);

// 1-indexed nearest rank ⌈p·m⌉, clamped to [1, m].
std::size_t nearest_rank(std::size_t m, double p);
// Nearest-rank percentile; reorders `values`.
double percentile_nearest_rank(std::vector<double>& values, double p);

// Pooled symmetric surface distances (pred→gt followed by gt→pred), in mm.
// Both masks must be non-empty.
std::vector<double> surface_distances(const Mask& pred, const Mask& gt);

double hd95(const Mask& pred, const Mask& gt, const MetricOptions& opts = {});

// One ClassMetrics per table entry. `threads` > 1 evaluates classes in parallel.
CaseEvaluation evaluate_case(const LabelVolume& pred, const LabelVolume& gt, const ClassTable& classes,
                             const MetricOptions& opts = {}, std::string case_id = {}, unsigned threads = 1);

struct ClassMeans {
  Label label_id = 0;
  double dice = 0.0;
  double hd95 = 0.0;
};

// Per-class means over cases, ClassTable order.
std::vector<ClassMeans> class_means(std::span<const CaseEvaluation> evals, const ClassTable& classes);

}  // namespace cbctseg
