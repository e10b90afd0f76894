#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cbctseg/class_table.hpp"
#include "cbctseg/core.hpp"
#include "cbctseg/manifest.hpp"
#include "cbctseg/metrics.hpp"

namespace cbctseg {

struct Component {
  std::size_t id = 0;
  std::vector<std::size_t> voxels;  // ascending linear indices
  std::size_t voxel_count() const { return voxels.size(); }
};

struct ComponentSet {
  Label label_id = 0;
  std::vector<Component> components;  // ordered by smallest linear index
};

// Per-voxel component id (-1 for background) plus component sizes.
struct ComponentLabeling {
  std::vector<std::int32_t> ids;
  std::vector<std::size_t> sizes;
};

// Union-find labelling under 6- or 26-connectivity; ids are assigned in
// order of each component's smallest linear index.
ComponentLabeling label_components(std::span<const std::uint8_t> mask, const Dims& dims, int connectivity);
ComponentSet connected_components(const Mask& mask, int connectivity, Label label_id = 0);

// A removal threshold in voxels. Units smaller than the threshold are
// removed; the infinite threshold removes unconditionally.
class Cutoff {
 public:
  constexpr Cutoff() = default;
  static constexpr Cutoff voxels(std::uint64_t n) { return Cutoff(n); }
  static constexpr Cutoff infinite() { return Cutoff(std::numeric_limits<std::uint64_t>::max()); }

  constexpr bool is_infinite() const { return value_ == std::numeric_limits<std::uint64_t>::max(); }
  constexpr std::uint64_t value() const { return value_; }
  constexpr bool removes(std::size_t size) const { return is_infinite() || size < value_; }

  friend constexpr auto operator<=>(Cutoff, Cutoff) = default;

 private:
  constexpr explicit Cutoff(std::uint64_t v) : value_(v) {}
  std::uint64_t value_ = 0;
};

std::string to_string(Cutoff c);

enum class CutoffMode { per_component, whole_class };

std::string_view to_string(CutoffMode m);
CutoffMode parse_cutoff_mode(std::string_view s);  // accepts '-' or '_'

struct ClassCutoff {
  Cutoff cutoff;  // min(cutoff_dice, cutoff_hd95)
  Cutoff cutoff_dice;
  Cutoff cutoff_hd95;
  friend bool operator==(const ClassCutoff&, const ClassCutoff&) = default;
};

struct CutoffTable {
  CutoffMode mode = CutoffMode::per_component;
  int connectivity = 26;
  std::map<Label, ClassCutoff> classes;

  std::string to_json_text() const;
  static CutoffTable from_json_text(std::string_view text);
  static CutoffTable load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  friend bool operator==(const CutoffTable&, const CutoffTable&) = default;
};

// Removes small components (per_component) or small classes (whole_class).
// Every non-zero label in `pred` must have an entry in the table.
LabelVolume apply_cutoffs(const LabelVolume& pred, const CutoffTable& cutoffs);

// Outcome scores of one class in one case. Removal units (components, or
// the whole class) have distinct sizes `sizes` (ascending, k entries);
// outcome j (0..k) keeps the units with size >= sizes[j] and outcome k
// removes everything.
struct ClassProfile {
  std::vector<std::size_t> sizes;
  std::vector<double> dice;  // k + 1 entries
  std::vector<double> hd95;  // k + 1 entries

  std::size_t outcome(Cutoff c) const;
};

struct CaseProfile {
  std::string case_id;
  std::vector<ClassProfile> classes;  // ClassTable order
};

struct OptimizerOptions {
  CutoffMode mode = CutoffMode::per_component;
  int connectivity = 26;
  MetricOptions metrics;
};

// Scores every removal outcome of every class of one case. Component
// decompositions and reference-surface distance maps are computed once and
// reused across outcomes.
CaseProfile profile_case(const LabelVolume& pred, const LabelVolume& gt, const ClassTable& classes,
                         const OptimizerOptions& opts, std::string case_id = {});

// Per class: candidates {0} ∪ {s+1} ∪ {∞} over observed unit sizes s; picks
// the best mean Dice and the best mean HD95 (ties to the smaller cutoff) and
// keeps the smaller of the two. A finite candidate that removes every
// observed unit is represented by ∞.
CutoffTable optimize_cutoffs(std::span<const CaseProfile> profiles, const ClassTable& classes,
                             const OptimizerOptions& opts);

struct TuningCase {
  std::string case_id;
  Source source = Source::F;
  LabelVolume pred;
  LabelVolume gt;
};

// Filters by source (nullopt keeps all), profiles and optimizes.
CutoffTable optimize_cutoffs(std::span<const TuningCase> cases, const ClassTable& classes,
                             const OptimizerOptions& opts, std::optional<Source> source_filter = Source::F,
                             unsigned threads = 1);

struct PostprocessSummary {
  std::vector<std::filesystem::path> written;
  std::size_t evaluated_cases = 0;  // cases with reference labels
  std::vector<ClassMeans> before;   // empty when no reference labels exist
  std::vector<ClassMeans> after;
};

// Writes <out_dir>/<case_id>.nii for every case; compares against
// reference labels where the manifest has them.
PostprocessSummary postprocess_dataset(const Manifest& manifest, const CutoffTable& cutoffs, const ClassTable& classes,
                                       const std::filesystem::path& out_dir, const MetricOptions& metrics = {},
                                       unsigned threads = 1);

}  // namespace cbctseg
