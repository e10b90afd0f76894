// Python bindings. Volumes cross the boundary as Fortran-ordered numpy
// arrays of shape (nx, ny, nz), which is the library's x-fastest layout.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "cbctseg/bordercore.hpp"
#include "cbctseg/class_table.hpp"
#include "cbctseg/core.hpp"
#include "cbctseg/ensemble.hpp"
#include "cbctseg/errors.hpp"
#include "cbctseg/metrics.hpp"
#include "cbctseg/nifti_io.hpp"
#include "cbctseg/planner.hpp"
#include "cbctseg/postprocess.hpp"
#include "cbctseg/ranking.hpp"

namespace py = pybind11;
using namespace cbctseg;

namespace {

template <typename T>
using FArray = py::array_t<T, py::array::f_style | py::array::forcecast>;

using Triple = std::array<double, 3>;

Spacing to_spacing(const Triple& s) { return {s[0], s[1], s[2]}; }
py::tuple from_spacing(const Spacing& s) { return py::make_tuple(s.sx(), s.sy(), s.sz()); }

template <typename T>
Dims dims_of(const FArray<T>& a) {
  if (a.ndim() != 3) throw ValidationError("expected a 3D array of shape (nx, ny, nz)");
  return {static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
          static_cast<std::size_t>(a.shape(2))};
}

template <typename T>
Volume<T> to_volume(const FArray<T>& a, const Triple& spacing) {
  Dims d = dims_of(a);
  std::vector<T> data(a.data(), a.data() + d.count());
  return Volume<T>(d, to_spacing(spacing), std::move(data));
}

template <typename T>
py::array_t<T> to_array(const Volume<T>& v) {
  const Dims& d = v.dims();
  py::array_t<T, py::array::f_style> out({d.nx, d.ny, d.nz});
  std::memcpy(out.mutable_data(), v.values().data(), v.size() * sizeof(T));
  return out;
}

Mask to_mask(const FArray<std::uint8_t>& a, const Triple& spacing) {
  Mask m = to_volume(a, spacing);
  for (auto& v : m.mutable_values()) v = v != 0;
  return m;
}

ClassTable table_for(const std::optional<std::vector<Label>>& labels) {
  if (!labels) return ClassTable::toothfairy2();
  std::vector<ClassEntry> entries;
  for (Label l : *labels) entries.push_back({l, "class_" + std::to_string(l), ClassGroup::other});
  return ClassTable(std::move(entries));
}

MetricOptions metric_options(std::optional<double> penalty_mm, double percentile) {
  MetricOptions o;
  if (penalty_mm) {
    o.penalty_mode = PenaltyMode::fixed;
    o.fixed_penalty_mm = *penalty_mm;
  }
  o.percentile = percentile;
  return o;
}

py::dict evaluation_dict(const CaseEvaluation& ev) {
  py::list rows;
  for (const auto& c : ev.classes) {
    py::dict r;
    r["label_id"] = c.label_id;
    r["dice"] = c.dice;
    r["hd95"] = c.hd95;
    r["gt_empty"] = c.gt_empty;
    r["pred_empty"] = c.pred_empty;
    rows.append(r);
  }
  py::dict out;
  out["case_id"] = ev.case_id;
  out["classes"] = rows;
  return out;
}

ProbabilityStack to_stack(const FArray<double>& a) {
  if (a.ndim() != 4) throw ValidationError("expected a 4D array of shape (nx, ny, nz, channels)");
  Dims d{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
         static_cast<std::size_t>(a.shape(2))};
  ProbabilityStack s(d, isotropic(1.0), static_cast<std::size_t>(a.shape(3)));
  std::memcpy(s.data.data(), a.data(), s.data.size() * sizeof(double));
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "CBCT segmentation evaluation and post-processing toolkit";

  static py::exception<ValidationError> validation_error(m, "ValidationError", PyExc_ValueError);
  static py::exception<IoError> io_error(m, "IoError", PyExc_OSError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ValidationError& e) {
      validation_error(e.what());
    } catch (const IoError& e) {
      io_error(e.what());
    }
  });

  // metrics
  m.def(
      "dice",
      [](const FArray<std::uint8_t>& pred, const FArray<std::uint8_t>& gt) {
        return dice(to_mask(pred, {1, 1, 1}), to_mask(gt, {1, 1, 1}));
      },
      py::arg("pred"), py::arg("gt"));
  m.def(
      "hd95",
      [](const FArray<std::uint8_t>& pred, const FArray<std::uint8_t>& gt, Triple spacing,
         std::optional<double> penalty_mm, double percentile) {
        return hd95(to_mask(pred, spacing), to_mask(gt, spacing), metric_options(penalty_mm, percentile));
      },
      py::arg("pred"), py::arg("gt"), py::arg("spacing") = Triple{1, 1, 1}, py::arg("penalty_mm") = py::none(),
      py::arg("percentile") = 0.95);
  m.def(
      "edt_sq",
      [](const FArray<std::uint8_t>& mask, Triple spacing) {
        return to_array(edt_sq(to_mask(mask, spacing), to_spacing(spacing)));
      },
      py::arg("mask"), py::arg("spacing") = Triple{1, 1, 1});
  m.def(
      "evaluate_case",
      [](const FArray<Label>& pred, const FArray<Label>& gt, Triple spacing,
         std::optional<std::vector<Label>> labels, std::optional<double> penalty_mm, double percentile,
         unsigned threads) {
        auto ev = evaluate_case(to_volume(pred, spacing), to_volume(gt, spacing), table_for(labels),
                                metric_options(penalty_mm, percentile), "case", threads);
        return evaluation_dict(ev);
      },
      py::arg("pred"), py::arg("gt"), py::arg("spacing") = Triple{0.3, 0.3, 0.3}, py::arg("labels") = py::none(),
      py::arg("penalty_mm") = py::none(), py::arg("percentile") = 0.95, py::arg("threads") = 1);

  // components and cutoffs
  m.def(
      "connected_components",
      [](const FArray<std::uint8_t>& mask, int connectivity) {
        Dims d = dims_of(mask);
        std::vector<std::uint8_t> bin(mask.data(), mask.data() + d.count());
        for (auto& v : bin) v = v != 0;
        ComponentLabeling lab = label_components(bin, d, connectivity);
        Volume<std::int32_t> ids(d, isotropic(1.0), std::move(lab.ids));
        return py::make_tuple(to_array(ids), lab.sizes);
      },
      py::arg("mask"), py::arg("connectivity") = 26);
  m.def(
      "optimize_cutoffs",
      [](const std::vector<std::pair<FArray<Label>, FArray<Label>>>& cases, std::vector<Label> labels,
         Triple spacing, const std::string& mode, int connectivity, unsigned threads) {
        std::vector<TuningCase> tc;
        for (std::size_t i = 0; i < cases.size(); ++i) {
          tc.push_back({"case_" + std::to_string(i), Source::F, to_volume(cases[i].first, spacing),
                        to_volume(cases[i].second, spacing)});
        }
        OptimizerOptions opts{parse_cutoff_mode(mode), connectivity, {}};
        return optimize_cutoffs(tc, table_for(labels), opts, std::nullopt, threads).to_json_text();
      },
      py::arg("cases"), py::arg("labels"), py::arg("spacing") = Triple{0.3, 0.3, 0.3},
      py::arg("mode") = "per_component", py::arg("connectivity") = 26, py::arg("threads") = 1,
      "Returns the cutoff table as JSON text.");
  m.def(
      "apply_cutoffs",
      [](const FArray<Label>& pred, const std::string& cutoffs_json) {
        return to_array(apply_cutoffs(to_volume(pred, {1, 1, 1}), CutoffTable::from_json_text(cutoffs_json)));
      },
      py::arg("pred"), py::arg("cutoffs_json"));

  // ranking
  m.def(
      "mean_ranks",
      [](const std::string& csv_text) {
        RankTable t = compute_mean_ranks(parse_scores_csv(csv_text));
        py::dict out;
        std::vector<std::string> cols;
        for (const auto& c : t.columns) cols.push_back(c.name());
        out["algorithms"] = t.algorithms;
        out["columns"] = cols;
        out["ranks"] = t.ranks;
        out["mean_rank"] = t.mean_rank;
        out["excluded_classes"] = t.excluded_classes;
        return out;
      },
      py::arg("scores_csv"));

  // ensembling
  m.def(
      "majority_vote",
      [](const std::vector<FArray<Label>>& preds, std::optional<std::vector<std::size_t>> priority) {
        std::vector<LabelVolume> vols;
        for (const auto& p : preds) vols.push_back(to_volume(p, {1, 1, 1}));
        std::vector<std::size_t> prio;
        if (priority) {
          prio = *priority;
        } else {
          for (std::size_t i = 0; i < vols.size(); ++i) prio.push_back(i);
        }
        return to_array(majority_vote(vols, prio));
      },
      py::arg("preds"), py::arg("priority") = py::none());
  m.def(
      "average_argmax",
      [](const std::vector<FArray<double>>& stacks) {
        std::vector<ProbabilityStack> s;
        for (const auto& a : stacks) s.push_back(to_stack(a));
        return to_array(average_argmax(s));
      },
      py::arg("stacks"), "Each stack has shape (nx, ny, nz, channels).");

  // border-core
  m.def(
      "encode_border_core",
      [](const FArray<Label>& instances, std::size_t width) {
        return to_array(encode_border_core(to_volume(instances, {1, 1, 1}), width));
      },
      py::arg("instances"), py::arg("width") = 1);
  m.def(
      "decode_border_core",
      [](const FArray<Label>& bc, std::size_t min_orphan_size) {
        DecodeResult r = decode_border_core(to_volume(bc, {1, 1, 1}), {min_orphan_size});
        py::dict out;
        out["instances"] = to_array(r.instances);
        out["core_instances"] = r.core_instances;
        out["promoted_orphans"] = r.promoted_orphans;
        out["dropped_orphans"] = r.dropped_orphans;
        out["dropped_voxels"] = r.dropped_voxels;
        return out;
      },
      py::arg("border_core"), py::arg("min_orphan_size") = 10);

  // planner
  m.def(
      "plan",
      [](std::optional<Extent3> patch, const std::string& preset, std::optional<std::vector<int>> mirror_axes,
         std::size_t min_edge) {
        if (preset != "toothfairy2" && preset != "baseline") throw ValidationError("unknown preset '" + preset + "'");
        PlanRequest req = preset == "toothfairy2" ? toothfairy2_request() : baseline_request();
        if (patch) req.patch_size = *patch;
        if (mirror_axes) req.mirror_axes = *mirror_axes;
        req.min_edge = min_edge;
        return plan_topology(req).to_json_text();
      },
      py::arg("patch") = py::none(), py::arg("preset") = "baseline", py::arg("mirror_axes") = py::none(),
      py::arg("min_edge") = 4, "Returns the network plan as JSON text.");

  // intensities
  m.def(
      "normalize_ct",
      [](const FArray<double>& vol, double clip_lower, double clip_upper, double shift, double scale) {
        NormalizationScheme s{clip_lower, clip_upper, shift, scale};
        s.validate();
        return to_array(normalize_ct(to_volume(vol, {1, 1, 1}), s));
      },
      py::arg("volume"), py::arg("clip_lower") = kToothFairy2Ct.clip_lower,
      py::arg("clip_upper") = kToothFairy2Ct.clip_upper, py::arg("shift") = kToothFairy2Ct.shift,
      py::arg("scale") = kToothFairy2Ct.scale);

  // I/O
  m.def(
      "read_label_volume",
      [](const std::filesystem::path& path) {
        LabelVolume v = nifti::read_label_volume(path);
        return py::make_tuple(to_array(v), from_spacing(v.spacing()));
      },
      py::arg("path"), "Returns (array, spacing).");
  m.def(
      "write_label_volume",
      [](const std::filesystem::path& path, const FArray<Label>& data, Triple spacing) {
        nifti::write_label_volume(to_volume(data, spacing), path);
      },
      py::arg("path"), py::arg("data"), py::arg("spacing") = Triple{0.3, 0.3, 0.3});
  m.def(
      "read_scalar_volume",
      [](const std::filesystem::path& path) {
        ScalarVolume v = nifti::read_scalar_volume(path);
        return py::make_tuple(to_array(v), from_spacing(v.spacing()));
      },
      py::arg("path"));

  m.def("toothfairy2_labels", [] { return ClassTable::toothfairy2().label_ids(); });
}
