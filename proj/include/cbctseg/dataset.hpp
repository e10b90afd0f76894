#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cbctseg/class_table.hpp"
#include "cbctseg/manifest.hpp"
#include "cbctseg/metrics.hpp"
#include "cbctseg/postprocess.hpp"

namespace cbctseg {

// Cases of the manifest that pass the source filter and have both a
// prediction and reference labels (missing paths are an error).
std::vector<CaseRecord> scored_cases(const Manifest& manifest, std::optional<Source> source);

// Loads each case inside its worker; results are in manifest order. Classes
// are evaluated in parallel when there are fewer cases than threads.
std::vector<CaseEvaluation> evaluate_dataset(std::span<const CaseRecord> cases, const ClassTable& classes,
                                             const MetricOptions& opts = {}, unsigned threads = 1);

// Profiles each case inside its worker, then optimizes.
CutoffTable optimize_cutoffs_dataset(std::span<const CaseRecord> cases, const ClassTable& classes,
                                     const OptimizerOptions& opts, unsigned threads = 1);

// case_id,label_id,dice,hd95,gt_empty,pred_empty
std::string evaluation_csv(std::span<const CaseEvaluation> evals);
// {"cases": n, "classes": [{"label_id", "name", "mean_dice", "mean_hd95"}, ...]}
std::string class_means_json(std::span<const ClassMeans> means, const ClassTable& classes, std::size_t n_cases);

}  // namespace cbctseg
