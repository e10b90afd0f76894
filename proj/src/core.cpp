#include "cbctseg/core.hpp"

#include <algorithm>
#include <cmath>

namespace cbctseg {

Spacing::Spacing(double sx, double sy, double sz) : v_{sx, sy, sz} {
  for (double s : v_) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw ValidationError("spacing components must be finite and > 0");
    }
  }
}

void NormalizationScheme::validate() const {
  if (!(clip_lower < clip_upper)) throw ValidationError("normalization requires clip_lower < clip_upper");
  if (!(scale > 0.0)) throw ValidationError("normalization scale must be > 0");
}

double NormalizationScheme::apply(double v) const {
  return (std::clamp(v, clip_lower, clip_upper) - shift) / scale;
}

ScalarVolume normalize_ct(const ScalarVolume& vol, const NormalizationScheme& scheme) {
  scheme.validate();
  std::vector<double> out(vol.size());
  std::ranges::transform(vol.values(), out.begin(), [&](double v) { return scheme.apply(v); });
  return ScalarVolume(vol.dims(), vol.spacing(), std::move(out));
}

ClassMask class_mask(const LabelVolume& vol, Label label_id) {
  ClassMask r{Mask(vol.dims(), vol.spacing()), 0};
  auto in = vol.values();
  auto out = r.mask.mutable_values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] == label_id) {
      out[i] = 1;
      ++r.count;
    }
  }
  return r;
}

std::vector<std::size_t> label_histogram(const LabelVolume& vol) {
  std::vector<std::size_t> h;
  for (Label v : vol.values()) {
    if (v >= h.size()) h.resize(std::size_t{v} + 1, 0);
    ++h[v];
  }
  return h;
}

}  // namespace cbctseg
