#pragma once

#include <string>
#include <vector>

#include "cbctseg/box.hpp"
#include "cbctseg/class_table.hpp"

namespace cbctseg::detail {

// Per-label voxel counts, overlap counts and union bounding boxes of a
// prediction / reference pair, gathered in one pass.
struct PairStats {
  std::vector<std::size_t> pred_count;
  std::vector<std::size_t> gt_count;
  std::vector<std::size_t> inter;
  std::vector<Box> boxes;
};

inline PairStats pair_stats(const LabelVolume& pred, const LabelVolume& gt, const ClassTable& classes) {
  if (pred.dims() != gt.dims()) throw ValidationError("prediction and reference dims differ");
  if (pred.spacing() != gt.spacing()) throw ValidationError("prediction and reference spacing differ");
  const std::size_t span = std::size_t{classes.max_label()} + 1;
  PairStats s{std::vector<std::size_t>(span, 0), std::vector<std::size_t>(span, 0), std::vector<std::size_t>(span, 0),
              std::vector<Box>(span)};
  std::vector<char> known(span, 0);
  for (Label l : classes.label_ids()) known[l] = 1;
  known[0] = 1;
  const Dims& d = pred.dims();
  const Label* p = pred.values().data();
  const Label* g = gt.values().data();
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      std::size_t i = d.index(0, y, z);
      for (std::size_t x = 0; x < d.nx; ++x, ++i) {
        Label a = p[i], b = g[i];
        if (a >= span || !known[a]) {
          throw ValidationError("prediction contains label " + std::to_string(a) + " not in the class table");
        }
        if (b >= span || !known[b]) {
          throw ValidationError("reference contains label " + std::to_string(b) + " not in the class table");
        }
        ++s.pred_count[a];
        ++s.gt_count[b];
        if (a == b) {
          ++s.inter[a];
          if (a) s.boxes[a].include(x, y, z);
        } else {
          if (a) s.boxes[a].include(x, y, z);
          if (b) s.boxes[b].include(x, y, z);
        }
      }
    }
  }
  return s;
}

// Bounding box of every label value in one volume.
inline std::vector<Box> label_boxes(const LabelVolume& vol, std::size_t span) {
  std::vector<Box> boxes(span);
  const Dims& d = vol.dims();
  const Label* p = vol.values().data();
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y) {
      std::size_t i = d.index(0, y, z);
      for (std::size_t x = 0; x < d.nx; ++x, ++i)
        if (p[i] && p[i] < span) boxes[p[i]].include(x, y, z);
    }
  return boxes;
}

}  // namespace cbctseg::detail
