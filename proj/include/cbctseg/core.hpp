#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cbctseg/errors.hpp"

namespace cbctseg {

using Label = std::uint16_t;

struct Dims {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t nz = 0;

  std::size_t count() const { return nx * ny * nz; }
  std::size_t operator[](int axis) const { return axis == 0 ? nx : axis == 1 ? ny : nz; }
  // x-fastest linear index
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const { return x + nx * (y + ny * z); }
  std::array<std::size_t, 3> coords(std::size_t linear) const {
    return {linear % nx, (linear / nx) % ny, linear / (nx * ny)};
  }
  friend bool operator==(const Dims&, const Dims&) = default;
};

// Millimetres per voxel along x, y, z.
class Spacing {
 public:
  Spacing() = default;
  Spacing(double sx, double sy, double sz);

  double sx() const { return v_[0]; }
  double sy() const { return v_[1]; }
  double sz() const { return v_[2]; }
  double operator[](int axis) const { return v_[axis]; }
  const std::array<double, 3>& values() const { return v_; }

  friend bool operator==(const Spacing&, const Spacing&) = default;

 private:
  std::array<double, 3> v_{1.0, 1.0, 1.0};
};

inline Spacing isotropic(double s) { return {s, s, s}; }

// Dense 3D grid in x-fastest order.
template <typename T>
class Volume {
 public:
  using value_type = T;

  Volume() = default;
  Volume(Dims dims, Spacing spacing, T fill = T{})
      : dims_(dims), spacing_(spacing), data_(dims.count(), fill) {}
  Volume(Dims dims, Spacing spacing, std::vector<T> data)
      : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    if (data_.size() != dims_.count()) {
      throw ValidationError("volume data length " + std::to_string(data_.size()) +
                            " does not match dims " + std::to_string(dims_.count()));
    }
  }

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::size_t size() const { return data_.size(); }

  std::span<const T> values() const { return data_; }
  std::span<T> mutable_values() { return data_; }
  const std::vector<T>& vector() const { return data_; }
  std::vector<T> release() && { return std::move(data_); }

  const T& operator[](std::size_t i) const { return data_[i]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& at(std::size_t x, std::size_t y, std::size_t z) const { return data_[dims_.index(x, y, z)]; }
  T& at(std::size_t x, std::size_t y, std::size_t z) { return data_[dims_.index(x, y, z)]; }

  bool same_geometry(const Volume& other) const {
    return dims_ == other.dims_ && spacing_ == other.spacing_;
  }
  template <typename U>
  bool same_geometry(const Volume<U>& other) const {
    return dims_ == other.dims() && spacing_ == other.spacing();
  }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<T> data_;
};

using LabelVolume = Volume<Label>;
using ScalarVolume = Volume<double>;
using Mask = Volume<std::uint8_t>;

// clamp to [clip_lower, clip_upper], subtract shift, divide by scale
struct NormalizationScheme {
  double clip_lower;
  double clip_upper;
  double shift;
  double scale;

  void validate() const;
  double apply(double v) const;
  friend bool operator==(const NormalizationScheme&, const NormalizationScheme&) = default;
};

// CT scheme with the foreground intensity statistics of the ToothFairy2 dataset.
inline constexpr NormalizationScheme kToothFairy2Ct{-992.0, 3513.0, 811.0, 1001.0};

ScalarVolume normalize_ct(const ScalarVolume& vol, const NormalizationScheme& scheme);

// Reverse voxel order along `axis` (0, 1 or 2).
template <typename T>
Volume<T> flip_axis(const Volume<T>& vol, int axis) {
  if (axis < 0 || axis > 2) {
    throw ValidationError("invalid flip axis " + std::to_string(axis));
  }
  const Dims& d = vol.dims();
  std::vector<T> out(vol.size());
  for (std::size_t z = 0; z < d.nz; ++z) {
    for (std::size_t y = 0; y < d.ny; ++y) {
      for (std::size_t x = 0; x < d.nx; ++x) {
        std::size_t sx = axis == 0 ? d.nx - 1 - x : x;
        std::size_t sy = axis == 1 ? d.ny - 1 - y : y;
        std::size_t sz = axis == 2 ? d.nz - 1 - z : z;
        out[d.index(x, y, z)] = vol[d.index(sx, sy, sz)];
      }
    }
  }
  return Volume<T>(d, vol.spacing(), std::move(out));
}

struct ClassMask {
  Mask mask;
  std::size_t count = 0;
};

ClassMask class_mask(const LabelVolume& vol, Label label_id);

// Voxel count of every label value present, indexed by label.
std::vector<std::size_t> label_histogram(const LabelVolume& vol);

}  // namespace cbctseg
