#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <limits>

#include "cbctseg/core.hpp"

namespace cbctseg {

// Half-open axis-aligned voxel box [lo, hi).
struct Box {
  std::array<std::size_t, 3> lo{std::numeric_limits<std::size_t>::max(), std::numeric_limits<std::size_t>::max(),
                                std::numeric_limits<std::size_t>::max()};
  std::array<std::size_t, 3> hi{0, 0, 0};

  bool empty() const { return lo[0] >= hi[0] || lo[1] >= hi[1] || lo[2] >= hi[2]; }
  Dims dims() const { return empty() ? Dims{} : Dims{hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]}; }

  void include(std::size_t x, std::size_t y, std::size_t z) {
    lo[0] = std::min(lo[0], x), lo[1] = std::min(lo[1], y), lo[2] = std::min(lo[2], z);
    hi[0] = std::max(hi[0], x + 1), hi[1] = std::max(hi[1], y + 1), hi[2] = std::max(hi[2], z + 1);
  }
  void merge(const Box& o) {
    if (o.empty()) return;
    for (int a = 0; a < 3; ++a) lo[a] = std::min(lo[a], o.lo[a]), hi[a] = std::max(hi[a], o.hi[a]);
  }
  // Grow by `margin` on every side, clipped to `bounds`.
  Box grown(std::size_t margin, const Dims& bounds) const {
    Box b = *this;
    for (int a = 0; a < 3; ++a) {
      b.lo[a] = lo[a] > margin ? lo[a] - margin : 0;
      b.hi[a] = std::min(hi[a] + margin, bounds[a]);
    }
    return b;
  }
  static Box whole(const Dims& d) { return Box{{0, 0, 0}, {d.nx, d.ny, d.nz}}; }
};

// Binary mask of `vol == label` restricted to `box`.
template <typename T>
Mask crop_equal(const Volume<T>& vol, const Box& box, T label) {
  Dims cd = box.dims();
  Mask out(cd, vol.spacing());
  const Dims& d = vol.dims();
  for (std::size_t z = 0; z < cd.nz; ++z) {
    for (std::size_t y = 0; y < cd.ny; ++y) {
      const T* src = vol.values().data() + d.index(box.lo[0], box.lo[1] + y, box.lo[2] + z);
      std::uint8_t* dst = out.mutable_values().data() + cd.index(0, y, z);
      for (std::size_t x = 0; x < cd.nx; ++x) dst[x] = src[x] == label ? 1 : 0;
    }
  }
  return out;
}

// Bounding box of the non-zero voxels of a mask.
inline Box foreground_box(const Mask& m) {
  Box b;
  const Dims& d = m.dims();
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x)
        if (m[d.index(x, y, z)]) b.include(x, y, z);
  return b;
}

}  // namespace cbctseg
