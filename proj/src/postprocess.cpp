#include "cbctseg/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cbctseg/box.hpp"
#include "cbctseg/nifti_io.hpp"
#include "cbctseg/parallel.hpp"
#include "label_stats.hpp"

namespace cbctseg {

// ---------------------------------------------------------------------------
// connected components

namespace {

struct UnionFind {
  std::vector<std::int32_t> parent;

  std::int32_t make() {
    parent.push_back(static_cast<std::int32_t>(parent.size()));
    return parent.back();
  }
  std::int32_t find(std::int32_t a) {
    std::int32_t root = a;
    while (parent[root] != root) root = parent[root];
    while (parent[a] != root) {
      std::int32_t next = parent[a];
      parent[a] = root;
      a = next;
    }
    return root;
  }
  void unite(std::int32_t a, std::int32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) {
      parent[b] = a;
    } else {
      parent[a] = b;
    }
  }
};

struct Offset {
  int dx, dy, dz;
};

// Neighbours already visited in a raster scan (x fastest).
std::vector<Offset> backward_neighbours(int connectivity) {
  if (connectivity == 6) return {{-1, 0, 0}, {0, -1, 0}, {0, 0, -1}};
  std::vector<Offset> out;
  for (int dz = -1; dz <= 0; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (dz == 0 && (dy > 0 || (dy == 0 && dx >= 0))) continue;
        out.push_back({dx, dy, dz});
      }
  return out;  // 13 offsets
}

}  // namespace

ComponentLabeling label_components(std::span<const std::uint8_t> mask, const Dims& d, int connectivity) {
  if (connectivity != 6 && connectivity != 26) throw ValidationError("connectivity must be 6 or 26");
  if (mask.size() != d.count()) throw ValidationError("mask length does not match dims");
  const auto offsets = backward_neighbours(connectivity);
  ComponentLabeling out{std::vector<std::int32_t>(mask.size(), -1), {}};
  UnionFind uf;
  auto& ids = out.ids;
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      std::size_t i = d.index(0, y, z);
      for (std::size_t x = 0; x < d.nx; ++x, ++i) {
        if (!mask[i]) continue;
        std::int32_t label = -1;
        for (const Offset& o : offsets) {
          if ((o.dx < 0 && x == 0) || (o.dx > 0 && x + 1 == d.nx) || (o.dy < 0 && y == 0) ||
              (o.dy > 0 && y + 1 == d.ny) || (o.dz < 0 && z == 0)) {
            continue;
          }
          std::size_t j = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) + o.dx +
                                                   o.dy * static_cast<std::ptrdiff_t>(d.nx) +
                                                   o.dz * static_cast<std::ptrdiff_t>(d.nx * d.ny));
          std::int32_t nl = ids[j];
          if (nl < 0) continue;
          if (label < 0) {
            label = nl;
          } else if (nl != label) {
            uf.unite(label, nl);
          }
        }
        ids[i] = label < 0 ? uf.make() : label;
      }
    }
  }
  // Final ids in order of first appearance, i.e. smallest linear index.
  std::vector<std::int32_t> final_id(uf.parent.size(), -1);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0) continue;
    std::int32_t root = uf.find(ids[i]);
    if (final_id[root] < 0) {
      final_id[root] = static_cast<std::int32_t>(out.sizes.size());
      out.sizes.push_back(0);
    }
    ids[i] = final_id[root];
    ++out.sizes[static_cast<std::size_t>(ids[i])];
  }
  return out;
}

ComponentSet connected_components(const Mask& mask, int connectivity, Label label_id) {
  ComponentLabeling lab = label_components(mask.values(), mask.dims(), connectivity);
  ComponentSet set{label_id, std::vector<Component>(lab.sizes.size())};
  for (std::size_t c = 0; c < set.components.size(); ++c) {
    set.components[c].id = c;
    set.components[c].voxels.reserve(lab.sizes[c]);
  }
  for (std::size_t i = 0; i < lab.ids.size(); ++i) {
    if (lab.ids[i] >= 0) set.components[static_cast<std::size_t>(lab.ids[i])].voxels.push_back(i);
  }
  return set;
}

// ---------------------------------------------------------------------------
// cutoff tables

std::string to_string(Cutoff c) { return c.is_infinite() ? "inf" : std::to_string(c.value()); }

std::string_view to_string(CutoffMode m) { return m == CutoffMode::per_component ? "per_component" : "whole_class"; }

CutoffMode parse_cutoff_mode(std::string_view s) {
  if (s == "per_component" || s == "per-component") return CutoffMode::per_component;
  if (s == "whole_class" || s == "whole-class") return CutoffMode::whole_class;
  throw ValidationError("unknown cutoff mode '" + std::string(s) + "'");
}

namespace {

nlohmann::json cutoff_json(Cutoff c) {
  if (c.is_infinite()) return "inf";
  return c.value();
}

Cutoff parse_cutoff(const nlohmann::json& j) {
  if (j.is_string() && j.get<std::string>() == "inf") return Cutoff::infinite();
  if (j.is_number_unsigned() || (j.is_number_integer() && j.get<long long>() >= 0)) {
    return Cutoff::voxels(j.get<std::uint64_t>());
  }
  throw ValidationError("cutoff must be a non-negative integer or \"inf\"");
}

}  // namespace

std::string CutoffTable::to_json_text() const {
  nlohmann::json cls = nlohmann::json::object();
  for (const auto& [label, c] : classes) {
    cls[std::to_string(label)] = {{"cutoff", cutoff_json(c.cutoff)},
                                  {"cutoff_dice", cutoff_json(c.cutoff_dice)},
                                  {"cutoff_hd95", cutoff_json(c.cutoff_hd95)}};
  }
  nlohmann::json j = {{"mode", std::string(to_string(mode))}, {"connectivity", connectivity}, {"classes", cls}};
  return j.dump(2) + "\n";
}

CutoffTable CutoffTable::from_json_text(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("cutoff table is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("mode") || !j.contains("classes") || !j["classes"].is_object()) {
    throw ValidationError("cutoff table needs \"mode\" and a \"classes\" object");
  }
  CutoffTable t;
  if (!j["mode"].is_string()) throw ValidationError("cutoff table \"mode\" must be a string");
  t.mode = parse_cutoff_mode(j["mode"].get<std::string>());
  if (j.contains("connectivity")) {
    if (!j["connectivity"].is_number_integer()) throw ValidationError("connectivity must be 6 or 26");
    t.connectivity = j["connectivity"].get<int>();
    if (t.connectivity != 6 && t.connectivity != 26) throw ValidationError("connectivity must be 6 or 26");
  }
  for (const auto& [key, val] : j["classes"].items()) {
    long label = 0;
    try {
      std::size_t pos = 0;
      label = std::stol(key, &pos);
      if (pos != key.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      throw ValidationError("cutoff table class key '" + key + "' is not an integer label");
    }
    if (label <= 0 || label > 65535) throw ValidationError("cutoff table label out of range: " + key);
    if (!val.contains("cutoff")) throw ValidationError("class " + key + " is missing \"cutoff\"");
    ClassCutoff c;
    c.cutoff = parse_cutoff(val["cutoff"]);
    c.cutoff_dice = val.contains("cutoff_dice") ? parse_cutoff(val["cutoff_dice"]) : c.cutoff;
    c.cutoff_hd95 = val.contains("cutoff_hd95") ? parse_cutoff(val["cutoff_hd95"]) : c.cutoff;
    t.classes[static_cast<Label>(label)] = c;
  }
  return t;
}

CutoffTable CutoffTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open cutoff table " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

void CutoffTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json_text();
  if (!out) throw IoError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// removal

LabelVolume apply_cutoffs(const LabelVolume& pred, const CutoffTable& cutoffs) {
  if (cutoffs.connectivity != 6 && cutoffs.connectivity != 26) {
    throw ValidationError("connectivity must be 6 or 26");
  }
  auto hist = label_histogram(pred);
  for (std::size_t l = 1; l < hist.size(); ++l) {
    if (hist[l] > 0 && !cutoffs.classes.contains(static_cast<Label>(l))) {
      throw ValidationError("class " + std::to_string(l) + " is present in the prediction but has no cutoff");
    }
  }
  LabelVolume out = pred;
  const Dims& d = pred.dims();
  auto boxes = detail::label_boxes(pred, hist.size());
  for (std::size_t l = 1; l < hist.size(); ++l) {
    if (hist[l] == 0) continue;
    const auto label = static_cast<Label>(l);
    const Cutoff cut = cutoffs.classes.at(label).cutoff;
    if (!cut.is_infinite() && cut.value() == 0) continue;
    const Box& box = boxes[l];
    const Dims bd = box.dims();
    auto to_full = [&](std::size_t local) {
      auto c = bd.coords(local);
      return d.index(box.lo[0] + c[0], box.lo[1] + c[1], box.lo[2] + c[2]);
    };
    Mask m = crop_equal(pred, box, label);
    if (cutoffs.mode == CutoffMode::whole_class || cut.is_infinite()) {
      if (!cut.removes(hist[l])) continue;
      for (std::size_t i = 0; i < m.size(); ++i)
        if (m[i]) out[to_full(i)] = 0;
      continue;
    }
    ComponentLabeling lab = label_components(m.values(), bd, cutoffs.connectivity);
    for (std::size_t i = 0; i < lab.ids.size(); ++i) {
      if (lab.ids[i] >= 0 && cut.removes(lab.sizes[static_cast<std::size_t>(lab.ids[i])])) out[to_full(i)] = 0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// optimisation

std::size_t ClassProfile::outcome(Cutoff c) const {
  if (c.is_infinite()) return sizes.size();
  return static_cast<std::size_t>(std::lower_bound(sizes.begin(), sizes.end(), c.value()) - sizes.begin());
}

namespace {

struct Unit {
  std::size_t size = 0;
  std::size_t overlap = 0;          // voxels shared with the reference
  std::vector<std::size_t> surface;  // crop-local indices
  std::vector<double> to_gt;         // distance of each surface voxel to the reference surface
};

ClassProfile profile_class(const LabelVolume& pred, const LabelVolume& gt, Label c, const detail::PairStats& st,
                           const OptimizerOptions& opts, double penalty) {
  ClassProfile prof;
  const std::size_t P = st.pred_count[c], G = st.gt_count[c];
  const double removed_dice = G == 0 ? 1.0 : 0.0;
  const double removed_hd = G == 0 ? 0.0 : penalty;
  if (P == 0) {
    prof.dice = {removed_dice};
    prof.hd95 = {removed_hd};
    return prof;
  }

  const Box box = st.boxes[c].grown(1, pred.dims());
  const Dims bd = box.dims();
  Mask pm = crop_equal(pred, box, c);
  Mask gm = crop_equal(gt, box, c);
  Mask p_surf = surface_mask(pm);

  std::vector<Unit> units;
  if (opts.mode == CutoffMode::whole_class) {
    units.resize(1);
    units[0].size = P;
    units[0].overlap = st.inter[c];
    for (std::size_t i = 0; i < p_surf.size(); ++i)
      if (p_surf[i]) units[0].surface.push_back(i);
  } else {
    ComponentLabeling lab = label_components(pm.values(), bd, opts.connectivity);
    units.resize(lab.sizes.size());
    for (std::size_t u = 0; u < units.size(); ++u) units[u].size = lab.sizes[u];
    for (std::size_t i = 0; i < lab.ids.size(); ++i) {
      if (lab.ids[i] < 0) continue;
      Unit& u = units[static_cast<std::size_t>(lab.ids[i])];
      if (gm[i]) ++u.overlap;
      if (p_surf[i]) u.surface.push_back(i);
    }
  }

  for (const Unit& u : units) prof.sizes.push_back(u.size);
  std::sort(prof.sizes.begin(), prof.sizes.end());
  prof.sizes.erase(std::unique(prof.sizes.begin(), prof.sizes.end()), prof.sizes.end());
  const std::size_t k = prof.sizes.size();
  prof.dice.assign(k + 1, removed_dice);
  prof.hd95.assign(k + 1, removed_hd);

  std::vector<std::size_t> gt_surface;
  std::vector<double> edt(bd.count());
  if (G > 0) {
    Mask g_surf = surface_mask(gm);
    for (std::size_t i = 0; i < g_surf.size(); ++i)
      if (g_surf[i]) gt_surface.push_back(i);
    edt_sq_into(g_surf.values(), bd, pred.spacing(), edt);
    for (Unit& u : units) {
      u.to_gt.reserve(u.surface.size());
      for (std::size_t i : u.surface) u.to_gt.push_back(std::sqrt(edt[i]));
    }
  }

  Mask kept_surface(bd, pred.spacing());
  std::vector<double> pooled;
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t min_size = prof.sizes[j];
    std::size_t kept = 0, overlap = 0;
    for (const Unit& u : units) {
      if (u.size < min_size) continue;
      kept += u.size;
      overlap += u.overlap;
    }
    prof.dice[j] = dice_from_counts(overlap, kept, G);
    if (G == 0) {
      prof.hd95[j] = penalty;
      continue;
    }
    std::fill(kept_surface.mutable_values().begin(), kept_surface.mutable_values().end(), std::uint8_t{0});
    pooled.clear();
    for (const Unit& u : units) {
      if (u.size < min_size) continue;
      for (std::size_t i : u.surface) kept_surface[i] = 1;
      pooled.insert(pooled.end(), u.to_gt.begin(), u.to_gt.end());
    }
    edt_sq_into(kept_surface.values(), bd, pred.spacing(), edt);
    for (std::size_t i : gt_surface) pooled.push_back(std::sqrt(edt[i]));
    prof.hd95[j] = percentile_nearest_rank(pooled, opts.metrics.percentile);
  }
  return prof;
}

}  // namespace

CaseProfile profile_case(const LabelVolume& pred, const LabelVolume& gt, const ClassTable& classes,
                         const OptimizerOptions& opts, std::string case_id) {
  opts.metrics.validate();
  if (opts.connectivity != 6 && opts.connectivity != 26) throw ValidationError("connectivity must be 6 or 26");
  const detail::PairStats st = detail::pair_stats(pred, gt, classes);
  const double penalty = opts.metrics.penalty(pred.dims(), pred.spacing());
  CaseProfile out{std::move(case_id), {}};
  out.classes.reserve(classes.size());
  for (const auto& e : classes.entries()) out.classes.push_back(profile_class(pred, gt, e.label_id, st, opts, penalty));
  return out;
}

CutoffTable optimize_cutoffs(std::span<const CaseProfile> profiles, const ClassTable& classes,
                             const OptimizerOptions& opts) {
  if (profiles.empty()) throw ValidationError("cutoff optimisation needs at least one case");
  for (const auto& p : profiles) {
    if (p.classes.size() != classes.size()) throw ValidationError("case profile does not match the class table");
  }
  CutoffTable table{opts.mode, opts.connectivity, {}};
  const double n = static_cast<double>(profiles.size());
  for (std::size_t k = 0; k < classes.size(); ++k) {
    std::vector<std::size_t> observed;
    for (const auto& p : profiles) observed.insert(observed.end(), p.classes[k].sizes.begin(), p.classes[k].sizes.end());
    std::sort(observed.begin(), observed.end());
    observed.erase(std::unique(observed.begin(), observed.end()), observed.end());

    std::vector<Cutoff> candidates{Cutoff::voxels(0)};
    for (std::size_t i = 0; i + 1 < observed.size(); ++i) candidates.push_back(Cutoff::voxels(observed[i] + 1));
    candidates.push_back(Cutoff::infinite());

    Cutoff best_dice_cut = candidates.front(), best_hd_cut = candidates.front();
    double best_dice = -1.0, best_hd = std::numeric_limits<double>::infinity();
    for (Cutoff cand : candidates) {
      double sum_dice = 0.0, sum_hd = 0.0;
      for (const auto& p : profiles) {
        const ClassProfile& cp = p.classes[k];
        std::size_t j = cp.outcome(cand);
        sum_dice += cp.dice[j];
        sum_hd += cp.hd95[j];
      }
      double mean_dice = sum_dice / n, mean_hd = sum_hd / n;
      if (mean_dice > best_dice) {
        best_dice = mean_dice;
        best_dice_cut = cand;
      }
      if (mean_hd < best_hd) {
        best_hd = mean_hd;
        best_hd_cut = cand;
      }
    }
    table.classes[classes.entries()[k].label_id] = {std::min(best_dice_cut, best_hd_cut), best_dice_cut, best_hd_cut};
  }
  return table;
}

CutoffTable optimize_cutoffs(std::span<const TuningCase> cases, const ClassTable& classes,
                             const OptimizerOptions& opts, std::optional<Source> source_filter, unsigned threads) {
  std::vector<const TuningCase*> selected;
  for (const auto& c : cases) {
    if (!source_filter || c.source == *source_filter) selected.push_back(&c);
  }
  if (selected.empty()) throw ValidationError("no tuning cases left after filtering by source");
  std::vector<CaseProfile> profiles(selected.size());
  parallel_for(selected.size(), threads, [&](std::size_t i) {
    profiles[i] = profile_case(selected[i]->pred, selected[i]->gt, classes, opts, selected[i]->case_id);
  });
  return optimize_cutoffs(profiles, classes, opts);
}

// ---------------------------------------------------------------------------
// dataset

PostprocessSummary postprocess_dataset(const Manifest& manifest, const CutoffTable& cutoffs, const ClassTable& classes,
                                       const std::filesystem::path& out_dir, const MetricOptions& metrics,
                                       unsigned threads) {
  for (const auto& c : manifest.cases) {
    if (!c.prediction) throw IoError("case '" + c.case_id + "' has no prediction path");
    if (!std::filesystem::exists(*c.prediction)) throw IoError("missing prediction " + c.prediction->string());
    if (c.labels && !std::filesystem::exists(*c.labels)) throw IoError("missing labels " + c.labels->string());
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string());

  const std::size_t n = manifest.cases.size();
  const unsigned inner = n < threads ? std::max(1u, threads / static_cast<unsigned>(n)) : 1u;
  PostprocessSummary summary;
  summary.written.resize(n);
  std::vector<std::optional<std::pair<CaseEvaluation, CaseEvaluation>>> evals(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const CaseRecord& rec = manifest.cases[i];
    LabelVolume pred = nifti::read_label_volume(*rec.prediction);
    LabelVolume post = apply_cutoffs(pred, cutoffs);
    std::filesystem::path out = out_dir / (rec.case_id + ".nii");
    nifti::write_label_volume(post, out);
    summary.written[i] = out;
    if (rec.labels) {
      LabelVolume gt = nifti::read_label_volume(*rec.labels);
      evals[i].emplace(evaluate_case(pred, gt, classes, metrics, rec.case_id, inner),
                       evaluate_case(post, gt, classes, metrics, rec.case_id, inner));
    }
  });
  std::vector<CaseEvaluation> before, after;
  for (auto& e : evals) {
    if (!e) continue;
    before.push_back(std::move(e->first));
    after.push_back(std::move(e->second));
  }
  summary.evaluated_cases = before.size();
  if (!before.empty()) {
    summary.before = class_means(before, classes);
    summary.after = class_means(after, classes);
  }
  return summary;
}

}  // namespace cbctseg
