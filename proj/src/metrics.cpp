#include "cbctseg/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "cbctseg/box.hpp"
#include "cbctseg/parallel.hpp"
#include "label_stats.hpp"

namespace cbctseg {

void MetricOptions::validate() const {
  if (penalty_mode == PenaltyMode::fixed && !(fixed_penalty_mm > 0.0)) {
    throw ValidationError("fixed HD95 penalty must be > 0");
  }
  if (!(percentile > 0.0 && percentile <= 1.0)) throw ValidationError("percentile must lie in (0, 1]");
}

double MetricOptions::penalty(const Dims& d, const Spacing& s) const {
  if (penalty_mode == PenaltyMode::fixed) return fixed_penalty_mm;
  double ex = static_cast<double>(d.nx) * s.sx();
  double ey = static_cast<double>(d.ny) * s.sy();
  double ez = static_cast<double>(d.nz) * s.sz();
  return std::sqrt(ex * ex + ey * ey + ez * ez);
}

double dice_from_counts(std::size_t intersection, std::size_t pred_count, std::size_t gt_count) {
  if (pred_count == 0 && gt_count == 0) return 1.0;
  return 2.0 * static_cast<double>(intersection) / static_cast<double>(pred_count + gt_count);
}

double dice(const Mask& pred, const Mask& gt) {
  if (pred.dims() != gt.dims()) throw ValidationError("dice: mask dimensions differ");
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    bool p = pred[i] != 0, g = gt[i] != 0;
    a += p;
    b += g;
    both += p && g;
  }
  return dice_from_counts(both, a, b);
}

namespace {

// Foreground voxel with a background / out-of-bounds face neighbour.
inline bool on_surface(const std::uint8_t* m, const Dims& d, std::size_t x, std::size_t y, std::size_t z,
                       std::size_t i) {
  if (x == 0 || x + 1 == d.nx || y == 0 || y + 1 == d.ny || z == 0 || z + 1 == d.nz) return true;
  const std::size_t sy = d.nx, sz = d.nx * d.ny;
  return !m[i - 1] || !m[i + 1] || !m[i - sy] || !m[i + sy] || !m[i - sz] || !m[i + sz];
}

template <typename Fn>
void for_each_surface(const Mask& mask, Fn&& fn) {
  const Dims& d = mask.dims();
  const std::uint8_t* m = mask.values().data();
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y) {
      std::size_t i = d.index(0, y, z);
      for (std::size_t x = 0; x < d.nx; ++x, ++i)
        if (m[i] && on_surface(m, d, x, y, z, i)) fn(i);
    }
}

// Distances from every surface voxel of `from` to the surface of `to`, given
// the squared EDT of `to`'s surface.
void directed(const std::vector<std::size_t>& from_surface, std::span<const double> to_edt, std::vector<double>& out) {
  for (std::size_t i : from_surface) out.push_back(std::sqrt(to_edt[i]));
}

// Surface distances for masks that are both non-empty, computed on the union
// bounding box grown by one voxel (the margin keeps surface extraction
// identical to the full-volume result).
std::vector<double> pooled_distances_cropped(const Mask& pred, const Mask& gt) {
  Box box = foreground_box(pred);
  box.merge(foreground_box(gt));
  box = box.grown(1, pred.dims());
  Mask p = crop_equal(pred, box, std::uint8_t{1});
  Mask g = crop_equal(gt, box, std::uint8_t{1});
  return surface_distances(p, g);
}

}  // namespace

std::vector<std::size_t> extract_surface(const Mask& mask) {
  std::vector<std::size_t> out;
  for_each_surface(mask, [&](std::size_t i) { out.push_back(i); });
  return out;
}

Mask surface_mask(const Mask& mask) {
  Mask out(mask.dims(), mask.spacing());
  for_each_surface(mask, [&](std::size_t i) { out[i] = 1; });
  return out;
}

std::size_t nearest_rank(std::size_t m, double p) {
  if (m == 0) throw ValidationError("percentile of an empty set");
  // the tolerance keeps exact products such as 0.95·20 from rounding up
  double r = std::ceil(p * static_cast<double>(m) - 1e-9);
  return std::clamp<std::size_t>(r < 1.0 ? 1 : static_cast<std::size_t>(r), 1, m);
}

double percentile_nearest_rank(std::vector<double>& values, double p) {
  std::size_t k = nearest_rank(values.size(), p) - 1;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  return values[k];
}

std::vector<double> surface_distances(const Mask& pred, const Mask& gt) {
  if (!pred.same_geometry(gt)) throw ValidationError("surface distances: mask geometry differs");
  Mask ps = surface_mask(pred);
  Mask gs = surface_mask(gt);
  std::vector<std::size_t> p_idx, g_idx;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (ps[i]) p_idx.push_back(i);
    if (gs[i]) g_idx.push_back(i);
  }
  if (p_idx.empty() || g_idx.empty()) throw ValidationError("surface distances need two non-empty masks");
  std::vector<double> edt(pred.size());
  std::vector<double> out;
  out.reserve(p_idx.size() + g_idx.size());
  edt_sq_into(gs.values(), gs.dims(), gs.spacing(), edt);
  directed(p_idx, edt, out);
  edt_sq_into(ps.values(), ps.dims(), ps.spacing(), edt);
  directed(g_idx, edt, out);
  return out;
}

double hd95(const Mask& pred, const Mask& gt, const MetricOptions& opts) {
  opts.validate();
  if (!pred.same_geometry(gt)) throw ValidationError("hd95: masks differ in dims or spacing");
  bool pred_any = std::ranges::any_of(pred.values(), [](auto v) { return v != 0; });
  bool gt_any = std::ranges::any_of(gt.values(), [](auto v) { return v != 0; });
  if (!pred_any && !gt_any) return 0.0;
  if (!pred_any || !gt_any) return opts.penalty(pred.dims(), pred.spacing());
  auto d = pooled_distances_cropped(pred, gt);
  return percentile_nearest_rank(d, opts.percentile);
}

CaseEvaluation evaluate_case(const LabelVolume& pred, const LabelVolume& gt, const ClassTable& classes,
                             const MetricOptions& opts, std::string case_id, unsigned threads) {
  opts.validate();
  const detail::PairStats st = detail::pair_stats(pred, gt, classes);
  const Dims& d = pred.dims();
  const auto& pred_count = st.pred_count;
  const auto& gt_count = st.gt_count;
  const auto& inter = st.inter;
  const auto& boxes = st.boxes;

  const double penalty = opts.penalty(d, pred.spacing());
  CaseEvaluation ev{std::move(case_id), std::vector<ClassMetrics>(classes.size())};
  parallel_for(classes.size(), threads, [&](std::size_t k) {
    Label c = classes.entries()[k].label_id;
    ClassMetrics m{c, 0.0, 0.0, gt_count[c] == 0, pred_count[c] == 0};
    m.dice = dice_from_counts(inter[c], pred_count[c], gt_count[c]);
    if (m.gt_empty && m.pred_empty) {
      m.hd95 = 0.0;
    } else if (m.gt_empty || m.pred_empty) {
      m.hd95 = penalty;
    } else {
      Box box = boxes[c].grown(1, d);
      Mask pm = crop_equal(pred, box, c);
      Mask gm = crop_equal(gt, box, c);
      auto dist = surface_distances(pm, gm);
      m.hd95 = percentile_nearest_rank(dist, opts.percentile);
    }
    ev.classes[k] = m;
  });
  return ev;
}

std::vector<ClassMeans> class_means(std::span<const CaseEvaluation> evals, const ClassTable& classes) {
  std::vector<ClassMeans> out;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    ClassMeans m{classes.entries()[k].label_id, 0.0, 0.0};
    for (const auto& ev : evals) {
      if (ev.classes.size() != classes.size()) throw ValidationError("evaluation does not match the class table");
      m.dice += ev.classes[k].dice;
      m.hd95 += ev.classes[k].hd95;
    }
    if (!evals.empty()) {
      m.dice /= static_cast<double>(evals.size());
      m.hd95 /= static_cast<double>(evals.size());
    }
    out.push_back(m);
  }
  return out;
}

}  // namespace cbctseg
