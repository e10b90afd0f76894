#include "cbctseg/dataset.hpp"

#include <algorithm>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "cbctseg/errors.hpp"
#include "cbctseg/nifti_io.hpp"
#include "cbctseg/parallel.hpp"
#include "format.hpp"

namespace cbctseg {

std::vector<CaseRecord> scored_cases(const Manifest& manifest, std::optional<Source> source) {
  std::vector<CaseRecord> out = manifest.filter(source);
  if (out.empty()) throw ValidationError("no cases match the source filter");
  for (const auto& c : out) {
    if (!c.prediction) throw ValidationError("case '" + c.case_id + "' has no prediction path");
    if (!c.labels) throw ValidationError("case '" + c.case_id + "' has no labels path");
    for (const auto& p : {*c.prediction, *c.labels}) {
      if (!std::filesystem::exists(p)) throw IoError("missing file " + p.string());
    }
  }
  return out;
}

namespace {

unsigned inner_threads(std::size_t cases, unsigned threads) {
  return cases < threads ? std::max(1u, threads / static_cast<unsigned>(cases)) : 1u;
}

}  // namespace

std::vector<CaseEvaluation> evaluate_dataset(std::span<const CaseRecord> cases, const ClassTable& classes,
                                             const MetricOptions& opts, unsigned threads) {
  opts.validate();
  std::vector<CaseEvaluation> out(cases.size());
  if (cases.empty()) return out;
  const unsigned inner = inner_threads(cases.size(), threads);
  parallel_for(cases.size(), threads, [&](std::size_t i) {
    const CaseRecord& c = cases[i];
    LabelVolume pred = nifti::read_label_volume(*c.prediction);
    LabelVolume gt = nifti::read_label_volume(*c.labels);
    out[i] = evaluate_case(pred, gt, classes, opts, c.case_id, inner);
  });
  return out;
}

CutoffTable optimize_cutoffs_dataset(std::span<const CaseRecord> cases, const ClassTable& classes,
                                     const OptimizerOptions& opts, unsigned threads) {
  if (cases.empty()) throw ValidationError("cutoff optimisation needs at least one case");
  std::vector<CaseProfile> profiles(cases.size());
  parallel_for(cases.size(), threads, [&](std::size_t i) {
    const CaseRecord& c = cases[i];
    LabelVolume pred = nifti::read_label_volume(*c.prediction);
    LabelVolume gt = nifti::read_label_volume(*c.labels);
    profiles[i] = profile_case(pred, gt, classes, opts, c.case_id);
  });
  return optimize_cutoffs(profiles, classes, opts);
}

std::string evaluation_csv(std::span<const CaseEvaluation> evals) {
  std::string out = "case_id,label_id,dice,hd95,gt_empty,pred_empty\n";
  for (const auto& ev : evals) {
    for (const auto& m : ev.classes) {
      out += ev.case_id + "," + std::to_string(m.label_id) + "," + format_double(m.dice) + "," +
             format_double(m.hd95) + "," + (m.gt_empty ? "1" : "0") + "," + (m.pred_empty ? "1" : "0") + "\n";
    }
  }
  return out;
}

std::string class_means_json(std::span<const ClassMeans> means, const ClassTable& classes, std::size_t n_cases) {
  nlohmann::ordered_json j;
  j["cases"] = n_cases;
  j["classes"] = nlohmann::ordered_json::array();
  double sum_dice = 0.0, sum_hd = 0.0;
  for (const auto& m : means) {
    auto pos = classes.position(m.label_id);
    j["classes"].push_back({{"label_id", m.label_id},
                            {"name", pos ? classes.entries()[*pos].name : std::string()},
                            {"mean_dice", m.dice},
                            {"mean_hd95", m.hd95}});
    sum_dice += m.dice;
    sum_hd += m.hd95;
  }
  if (!means.empty()) {
    j["mean_dice"] = sum_dice / static_cast<double>(means.size());
    j["mean_hd95"] = sum_hd / static_cast<double>(means.size());
  }
  return j.dump(2) + "\n";
}

}  // namespace cbctseg
