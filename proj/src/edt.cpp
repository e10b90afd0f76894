// Separable exact Euclidean distance transform (Felzenszwalb & Huttenlocher
// lower envelope of parabolas) with anisotropic spacing.

#include <cmath>
#include <limits>
#include <vector>

#include "cbctseg/metrics.hpp"

namespace cbctseg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

inline double offset_sq(std::ptrdiff_t d, double s) {
  double t = static_cast<double>(d) * s;
  return t * t;
}

// Scratch buffers reused across lines of one pass.
struct Envelope {
  std::vector<double> f;
  std::vector<std::ptrdiff_t> v;
  std::vector<double> z;
  std::vector<double> out;

  void resize(std::size_t n) {
    f.resize(n);
    v.resize(n);
    z.resize(n + 1);
    out.resize(n);
  }
};

// out[q] = min_p f[p] + ((q-p)·s)². The envelope keeps near-tied parabolas
// and each query checks its neighbours, so the chosen value is the exact
// minimum of the floating-point candidate values.
void lower_envelope(Envelope& e, std::size_t n, double s) {
  const double w2 = s * s;
  const double eps = 1e-7;
  std::ptrdiff_t k = -1;
  for (std::size_t qi = 0; qi < n; ++qi) {
    if (e.f[qi] == kInf) continue;
    auto q = static_cast<std::ptrdiff_t>(qi);
    if (k < 0) {
      k = 0;
      e.v[0] = q;
      e.z[0] = -kInf;
      e.z[1] = kInf;
      continue;
    }
    double sq_q = e.f[qi] + w2 * static_cast<double>(q) * static_cast<double>(q);
    double sep;
    while (true) {
      std::ptrdiff_t p = e.v[k];
      double sq_p = e.f[p] + w2 * static_cast<double>(p) * static_cast<double>(p);
      sep = (sq_q - sq_p) / (2.0 * w2 * static_cast<double>(q - p));
      if (k > 0 && sep < e.z[k] - eps) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    e.v[k] = q;
    e.z[k] = sep;
    e.z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(e.out.begin(), e.out.begin() + static_cast<std::ptrdiff_t>(n), kInf);
    return;
  }
  const std::ptrdiff_t last = k;
  std::ptrdiff_t j = 0;
  for (std::size_t qi = 0; qi < n; ++qi) {
    auto q = static_cast<std::ptrdiff_t>(qi);
    while (j < last && e.z[j + 1] < static_cast<double>(q)) ++j;
    double best = kInf;
    for (std::ptrdiff_t c = std::max<std::ptrdiff_t>(0, j - 2); c <= std::min(last, j + 2); ++c) {
      std::ptrdiff_t p = e.v[c];
      double val = e.f[p] + offset_sq(q - p, s);
      if (val < best) best = val;
    }
    e.out[qi] = best;
  }
}

}  // namespace

void edt_sq_into(std::span<const std::uint8_t> mask, const Dims& d, const Spacing& spacing, std::span<double> out) {
  const std::size_t nx = d.nx, ny = d.ny, nz = d.nz;
  if (mask.size() != d.count() || out.size() != d.count()) throw ValidationError("edt buffer size mismatch");

  // x: nearest foreground in the row by two sweeps
  for (std::size_t z = 0; z < nz; ++z) {
    for (std::size_t y = 0; y < ny; ++y) {
      const std::size_t base = d.index(0, y, z);
      std::ptrdiff_t last = -1;
      for (std::size_t x = 0; x < nx; ++x) {
        if (mask[base + x]) last = static_cast<std::ptrdiff_t>(x);
        out[base + x] = last < 0 ? kInf : offset_sq(static_cast<std::ptrdiff_t>(x) - last, spacing.sx());
      }
      last = -1;
      for (std::size_t xi = nx; xi-- > 0;) {
        if (mask[base + xi]) last = static_cast<std::ptrdiff_t>(xi);
        if (last >= 0) {
          double v = offset_sq(last - static_cast<std::ptrdiff_t>(xi), spacing.sx());
          if (v < out[base + xi]) out[base + xi] = v;
        }
      }
    }
  }

  Envelope e;
  // y
  e.resize(ny);
  for (std::size_t z = 0; z < nz; ++z) {
    for (std::size_t x = 0; x < nx; ++x) {
      const std::size_t base = d.index(x, 0, z);
      for (std::size_t y = 0; y < ny; ++y) e.f[y] = out[base + y * nx];
      lower_envelope(e, ny, spacing.sy());
      for (std::size_t y = 0; y < ny; ++y) out[base + y * nx] = e.out[y];
    }
  }
  // z
  e.resize(nz);
  const std::size_t slab = nx * ny;
  for (std::size_t y = 0; y < ny; ++y) {
    for (std::size_t x = 0; x < nx; ++x) {
      const std::size_t base = d.index(x, y, 0);
      for (std::size_t z = 0; z < nz; ++z) e.f[z] = out[base + z * slab];
      lower_envelope(e, nz, spacing.sz());
      for (std::size_t z = 0; z < nz; ++z) out[base + z * slab] = e.out[z];
    }
  }
}

ScalarVolume edt_sq(const Mask& mask, const Spacing& spacing) {
  bool any = false;
  for (auto v : mask.values()) any = any || v != 0;
  if (!any) throw ValidationError("edt_sq requires at least one foreground voxel");
  ScalarVolume out(mask.dims(), spacing, 0.0);
  edt_sq_into(mask.values(), mask.dims(), spacing, out.mutable_values());
  return out;
}

ScalarVolume edt_sq(const Mask& mask) { return edt_sq(mask, mask.spacing()); }

}  // namespace cbctseg
