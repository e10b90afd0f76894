#include "cbctseg/bordercore.hpp"

#include <algorithm>
#include <limits>
#include <vector>

#include "cbctseg/errors.hpp"
#include "cbctseg/parallel.hpp"
#include "cbctseg/postprocess.hpp"

namespace cbctseg {

namespace {

// Sliding min and max of radius r along one axis; out-of-range samples read
// as 0. Works on lines given by (start, stride, length).
void filter_axis(std::vector<Label>& lo, std::vector<Label>& hi, const Dims& d, int axis, std::size_t r,
                 unsigned threads) {
  const std::size_t len = d[axis];
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? d.nx : d.nx * d.ny;
  const std::size_t lines = d.count() / len;
  parallel_for(lines, threads, [&](std::size_t line) {
    std::size_t start;
    if (axis == 0) {
      start = line * d.nx;
    } else if (axis == 1) {
      start = (line % d.nx) + (line / d.nx) * d.nx * d.ny;
    } else {
      start = line;
    }
    std::vector<Label> in_lo(len), in_hi(len);
    for (std::size_t k = 0; k < len; ++k) {
      in_lo[k] = lo[start + k * stride];
      in_hi[k] = hi[start + k * stride];
    }
    for (std::size_t k = 0; k < len; ++k) {
      Label mn = in_lo[k], mx = in_hi[k];
      if (k < r || k + r >= len) mn = 0;
      std::size_t a = k >= r ? k - r : 0, b = std::min(len - 1, k + r);
      for (std::size_t t = a; t <= b; ++t) {
        mn = std::min(mn, in_lo[t]);
        mx = std::max(mx, in_hi[t]);
      }
      lo[start + k * stride] = mn;
      hi[start + k * stride] = mx;
    }
  });
}

}  // namespace

LabelVolume encode_border_core(const LabelVolume& instances, std::size_t border_width, unsigned threads) {
  if (border_width < 1) throw ValidationError("border width must be >= 1");
  const Dims& d = instances.dims();
  std::vector<Label> lo(instances.values().begin(), instances.values().end());
  std::vector<Label> hi = lo;
  for (int axis = 0; axis < 3; ++axis) filter_axis(lo, hi, d, axis, border_width, threads);
  LabelVolume out(d, instances.spacing());
  for (std::size_t i = 0; i < out.size(); ++i) {
    Label v = instances[i];
    if (v == 0) continue;
    out[i] = (lo[i] == v && hi[i] == v) ? kCore : kBorder;
  }
  return out;
}

DecodeResult decode_border_core(const LabelVolume& bc, const DecodeOptions& opts) {
  const Dims& d = bc.dims();
  const std::size_t n = bc.size();
  std::vector<std::uint8_t> core(n), border(n);
  for (std::size_t i = 0; i < n; ++i) {
    Label v = bc[i];
    if (v > kBorder) throw ValidationError("border-core map holds value " + std::to_string(v));
    core[i] = v == kCore;
    border[i] = v == kBorder;
  }

  DecodeResult res;
  res.instances = LabelVolume(d, bc.spacing());
  ComponentLabeling cores = label_components(core, d, 26);
  if (cores.sizes.size() > std::numeric_limits<Label>::max()) throw ValidationError("too many instances");
  res.core_instances = cores.sizes.size();

  // border state: 0 not border, 1 unreached, 2 reached this generation, 3 settled
  auto& state = border;
  auto& out = res.instances;
  std::vector<std::size_t> frontier;
  for (std::size_t i = 0; i < n; ++i) {
    if (cores.ids[i] >= 0) {
      out[i] = static_cast<Label>(cores.ids[i] + 1);
      frontier.push_back(i);
    }
  }

  std::vector<std::size_t> next;
  const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(d.nx), sz = static_cast<std::ptrdiff_t>(d.nx * d.ny);
  while (!frontier.empty()) {
    next.clear();
    for (std::size_t f : frontier) {
      auto [x, y, z] = d.coords(f);
      const Label id = out[f];
      auto visit = [&](std::ptrdiff_t off) {
        std::size_t j = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(f) + off);
        if (state[j] == 1) {
          state[j] = 2;
          out[j] = id;
          next.push_back(j);
        } else if (state[j] == 2 && id < out[j]) {
          out[j] = id;
        }
      };
      if (x > 0) visit(-1);
      if (x + 1 < d.nx) visit(1);
      if (y > 0) visit(-sy);
      if (y + 1 < d.ny) visit(sy);
      if (z > 0) visit(-sz);
      if (z + 1 < d.nz) visit(sz);
    }
    for (std::size_t j : next) state[j] = 3;
    frontier.swap(next);
  }

  std::vector<std::uint8_t> orphan(n);
  for (std::size_t i = 0; i < n; ++i) orphan[i] = state[i] == 1;
  ComponentLabeling orphans = label_components(orphan, d, 26);
  std::vector<Label> orphan_id(orphans.sizes.size(), kBackground);
  std::size_t next_id = res.core_instances + 1;
  for (std::size_t c = 0; c < orphans.sizes.size(); ++c) {
    if (orphans.sizes[c] >= opts.min_orphan_size) {
      if (next_id > std::numeric_limits<Label>::max()) throw ValidationError("too many instances");
      orphan_id[c] = static_cast<Label>(next_id++);
      ++res.promoted_orphans;
    } else {
      ++res.dropped_orphans;
      res.dropped_voxels += orphans.sizes[c];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (orphans.ids[i] >= 0) out[i] = orphan_id[static_cast<std::size_t>(orphans.ids[i])];
  }
  return res;
}

}  // namespace cbctseg
