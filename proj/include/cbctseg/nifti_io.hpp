#pragma once

// Reader/writer for a NIfTI-1 single-file subset: little-endian, 3D (4D for
// probability stacks), datatypes u8/i16/i32/f32/f64/u16, optional gzip.
// Orientation (qform/sform) is ignored; only pixdim spacing is consumed.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "cbctseg/core.hpp"

namespace cbctseg::nifti {

enum class DataType : std::int16_t {
  u8 = 2,
  i16 = 4,
  i32 = 8,
  f32 = 16,
  f64 = 64,
  u16 = 512,
};

bool is_integer(DataType t);

struct Header {
  int ndim = 0;
  std::array<std::size_t, 7> dim{};  // dim[1..7] of the file
  DataType datatype = DataType::u8;
  std::array<float, 3> pixdim{};     // pixdim[1..3]
  float vox_offset = 352.0f;
  float scl_slope = 0.0f;
  float scl_inter = 0.0f;
};

// Header plus payload decoded to doubles (no scaling applied).
struct Image {
  Header header;
  std::vector<double> raw;
};

// Parses a file (gzip detected by magic bytes). Accepts dim[0] in [1,7].
Image read_image(const std::filesystem::path& path);
Image parse_image(std::span<const std::uint8_t> bytes);

// The whole file as stored, inflated if gzip-compressed.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

LabelVolume read_label_volume(const std::filesystem::path& path);
ScalarVolume read_scalar_volume(const std::filesystem::path& path);

// Integer datatype without scaling -> labels; anything else -> intensities.
std::variant<ScalarVolume, LabelVolume> read_volume(const std::filesystem::path& path);

// u8 if the max label < 256, else u16; vox_offset 352. A .gz path is gzip-compressed.
void write_label_volume(const LabelVolume& vol, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_label_volume(const LabelVolume& vol);

// Stored as f64 so the values read back exactly.
void write_scalar_volume(const ScalarVolume& vol, const std::filesystem::path& path);

// Writes raw encoded bytes of an arbitrary 3D/4D image (f32/f64/any type).
std::vector<std::uint8_t> encode_image(const Header& header, std::span<const double> values);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
// write_bytes, compressing when the path ends in .gz
void write_image_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> gzip(std::span<const std::uint8_t> in);

}  // namespace cbctseg::nifti
