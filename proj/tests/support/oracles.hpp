#pragma once

// Slow, direct reference implementations used only by tests. None of these
// share code with the library paths they check.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <vector>

#include "cbctseg/core.hpp"

namespace cbctseg::oracle {

inline double sq_dist(std::array<long, 3> a, std::array<long, 3> b, const Spacing& s) {
  double tx = static_cast<double>(a[0] - b[0]) * s.sx();
  double ty = static_cast<double>(a[1] - b[1]) * s.sy();
  double tz = static_cast<double>(a[2] - b[2]) * s.sz();
  return tx * tx + ty * ty + tz * tz;
}

inline std::array<long, 3> coords(const Dims& d, std::size_t i) {
  auto c = d.coords(i);
  return {static_cast<long>(c[0]), static_cast<long>(c[1]), static_cast<long>(c[2])};
}

inline bool inside(const Dims& d, long x, long y, long z) {
  return x >= 0 && y >= 0 && z >= 0 && x < static_cast<long>(d.nx) && y < static_cast<long>(d.ny) &&
         z < static_cast<long>(d.nz);
}

// min over all foreground voxels of the squared distance, O(n²)
inline std::vector<double> edt_sq(const Mask& m, const Spacing& s) {
  std::vector<std::array<long, 3>> src;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) src.push_back(coords(m.dims(), i));
  std::vector<double> out(m.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < m.size(); ++i) {
    auto c = coords(m.dims(), i);
    for (const auto& q : src) out[i] = std::min(out[i], sq_dist(c, q, s));
  }
  return out;
}

inline std::vector<std::array<long, 3>> surface(const Mask& m) {
  const Dims& d = m.dims();
  std::vector<std::array<long, 3>> out;
  const long off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m[i]) continue;
    auto c = coords(d, i);
    bool boundary = false;
    for (auto& o : off) {
      long x = c[0] + o[0], y = c[1] + o[1], z = c[2] + o[2];
      if (!inside(d, x, y, z) || !m.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y),
                                       static_cast<std::size_t>(z))) {
        boundary = true;
      }
    }
    if (boundary) out.push_back(c);
  }
  return out;
}

inline std::size_t rank_1based(std::size_t m, double p) {
  // ⌈p·m⌉ in exact integer arithmetic for percentiles given in hundredths
  long hundredths = std::lround(p * 100.0);
  if (std::abs(p * 100.0 - static_cast<double>(hundredths)) < 1e-12) {
    std::size_t r = (static_cast<std::size_t>(hundredths) * m + 99) / 100;
    return std::clamp<std::size_t>(r, 1, m);
  }
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(p * static_cast<double>(m))), 1, m);
}

// Pairwise-distance HD at percentile p; both masks non-empty.
inline double hd(const Mask& a, const Mask& b, double p) {
  auto sa = surface(a), sb = surface(b);
  std::vector<double> d;
  for (const auto& u : sa) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& v : sb) best = std::min(best, sq_dist(u, v, a.spacing()));
    d.push_back(std::sqrt(best));
  }
  for (const auto& u : sb) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& v : sa) best = std::min(best, sq_dist(u, v, a.spacing()));
    d.push_back(std::sqrt(best));
  }
  std::sort(d.begin(), d.end());
  return d[rank_1based(d.size(), p) - 1];
}

// Breadth-first flood fill; returns a component id per voxel (-1 background),
// ids in order of smallest linear index.
inline std::vector<int> flood_fill(const Mask& m, int connectivity) {
  const Dims& d = m.dims();
  std::vector<int> id(m.size(), -1);
  int next = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m[i] || id[i] >= 0) continue;
    std::deque<std::size_t> q{i};
    id[i] = next;
    while (!q.empty()) {
      auto c = coords(d, q.front());
      q.pop_front();
      for (long dz = -1; dz <= 1; ++dz)
        for (long dy = -1; dy <= 1; ++dy)
          for (long dx = -1; dx <= 1; ++dx) {
            long manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
            if (manhattan == 0 || (connectivity == 6 && manhattan != 1)) continue;
            long x = c[0] + dx, y = c[1] + dy, z = c[2] + dz;
            if (!inside(d, x, y, z)) continue;
            std::size_t j = d.index(static_cast<std::size_t>(x), static_cast<std::size_t>(y),
                                    static_cast<std::size_t>(z));
            if (m[j] && id[j] < 0) {
              id[j] = next;
              q.push_back(j);
            }
          }
    }
    ++next;
  }
  return id;
}

// True if two labelings induce the same partition of the foreground.
template <typename A, typename B>
bool same_partition(const std::vector<A>& a, const std::vector<B>& b, A a_bg, B b_bg) {
  if (a.size() != b.size()) return false;
  std::vector<std::pair<A, B>> pairs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] == a_bg) != (b[i] == b_bg)) return false;
    if (a[i] != a_bg) pairs.emplace_back(a[i], b[i]);
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  // bijection: each a maps to one b and vice versa
  for (std::size_t i = 1; i < pairs.size(); ++i)
    if (pairs[i].first == pairs[i - 1].first) return false;
  std::vector<B> bs;
  for (auto& p : pairs) bs.push_back(p.second);
  std::sort(bs.begin(), bs.end());
  return std::adjacent_find(bs.begin(), bs.end()) == bs.end();
}

}  // namespace cbctseg::oracle
