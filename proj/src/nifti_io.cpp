#include "cbctseg/nifti_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include <zlib.h>

namespace cbctseg::nifti {

static_assert(std::endian::native == std::endian::little, "NIfTI codec assumes a little-endian host");

namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kDataOffset = 352;

template <typename T>
T load(std::span<const std::uint8_t> bytes, std::size_t offset) {
  T v;
  std::memcpy(&v, bytes.data() + offset, sizeof(T));
  return v;
}

template <typename T>
void store(std::vector<std::uint8_t>& bytes, std::size_t offset, T v) {
  std::memcpy(bytes.data() + offset, &v, sizeof(T));
}

std::size_t bytes_per_voxel(DataType t) {
  switch (t) {
    case DataType::u8: return 1;
    case DataType::i16:
    case DataType::u16: return 2;
    case DataType::i32:
    case DataType::f32: return 4;
    case DataType::f64: return 8;
  }
  return 0;
}

DataType checked_datatype(std::int16_t code) {
  switch (code) {
    case 2: case 4: case 8: case 16: case 64: case 512:
      return static_cast<DataType>(code);
    default:
      throw ValidationError("unsupported NIfTI datatype code " + std::to_string(code));
  }
}

template <typename T>
void decode_payload(std::span<const std::uint8_t> src, std::vector<double>& out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<double>(load<T>(src, i * sizeof(T)));
  }
}

template <typename T>
void encode_payload(std::span<const double> values, std::vector<std::uint8_t>& out, std::size_t offset) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    T v;
    if constexpr (std::is_integral_v<T>) {
      v = static_cast<T>(std::llround(values[i]));
    } else {
      v = static_cast<T>(values[i]);
    }
    store<T>(out, offset + i * sizeof(T), v);
  }
}

std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> in) {
  std::vector<std::uint8_t> out;
  out.reserve(in.size() * 4);
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 16) != Z_OK) throw IoError("zlib initialisation failed");
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  std::uint8_t chunk[1 << 16];
  int rc = Z_OK;
  while (true) {
    zs.next_out = chunk;
    zs.avail_out = sizeof(chunk);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw IoError("corrupt gzip stream");
    }
    out.insert(out.end(), chunk, chunk + (sizeof(chunk) - zs.avail_out));
    if (rc == Z_STREAM_END) {
      // concatenated gzip members
      if (zs.avail_in >= 2 && zs.next_in[0] == 0x1f && zs.next_in[1] == 0x8b) {
        inflateReset(&zs);
        continue;
      }
      break;
    }
    if (zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw IoError("truncated gzip stream");
    }
  }
  inflateEnd(&zs);
  return out;
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    throw IoError("failed to read " + path.string());
  }
  return bytes;
}

Spacing spacing_of(const Header& h) {
  try {
    return Spacing(h.pixdim[0], h.pixdim[1], h.pixdim[2]);
  } catch (const ValidationError&) {
    throw ValidationError("NIfTI pixdim[1..3] must be positive");
  }
}

void require_3d(const Header& h) {
  if (h.ndim != 3) throw ValidationError("expected a 3D volume, dim[0] = " + std::to_string(h.ndim));
}

Dims dims_of(const Header& h) { return {h.dim[0], h.dim[1], h.dim[2]}; }

}  // namespace

bool is_integer(DataType t) {
  return t == DataType::u8 || t == DataType::i16 || t == DataType::i32 || t == DataType::u16;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  auto bytes = slurp(path);
  if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) return gunzip(bytes);
  return bytes;
}

Image parse_image(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) throw IoError("file too short for a NIfTI-1 header");
  if (load<std::int32_t>(bytes, 0) != 348) {
    throw ValidationError("sizeof_hdr is not 348 (big-endian or not NIfTI-1)");
  }
  if (std::memcmp(bytes.data() + 344, "n+1\0", 4) != 0) {
    throw ValidationError("NIfTI magic is not \"n+1\" (only single-file NIfTI-1 is supported)");
  }
  Header h;
  h.ndim = load<std::int16_t>(bytes, 40);
  if (h.ndim < 1 || h.ndim > 7) {
    throw ValidationError("dim[0] = " + std::to_string(h.ndim) + " outside [1,7]; big-endian files are not supported");
  }
  std::size_t count = 1;
  for (int i = 0; i < 7; ++i) {
    std::int16_t d = load<std::int16_t>(bytes, 42 + 2 * i);
    if (i < h.ndim) {
      if (d < 1) throw ValidationError("non-positive dimension in NIfTI header");
      h.dim[i] = static_cast<std::size_t>(d);
      count *= h.dim[i];
    } else {
      h.dim[i] = 1;
    }
  }
  h.datatype = checked_datatype(load<std::int16_t>(bytes, 70));
  for (int i = 0; i < 3; ++i) h.pixdim[i] = load<float>(bytes, 80 + 4 * i);
  h.vox_offset = load<float>(bytes, 108);
  h.scl_slope = load<float>(bytes, 112);
  h.scl_inter = load<float>(bytes, 116);

  if (!(h.vox_offset >= static_cast<float>(kDataOffset))) throw ValidationError("vox_offset must be >= 352");
  auto offset = static_cast<std::size_t>(h.vox_offset);
  std::size_t need = count * bytes_per_voxel(h.datatype);
  if (bytes.size() < offset || bytes.size() - offset < need) {
    throw IoError("truncated NIfTI payload: need " + std::to_string(need) + " bytes");
  }
  Image img{h, std::vector<double>(count)};
  auto payload = bytes.subspan(offset, need);
  switch (h.datatype) {
    case DataType::u8: decode_payload<std::uint8_t>(payload, img.raw); break;
    case DataType::i16: decode_payload<std::int16_t>(payload, img.raw); break;
    case DataType::i32: decode_payload<std::int32_t>(payload, img.raw); break;
    case DataType::f32: decode_payload<float>(payload, img.raw); break;
    case DataType::f64: decode_payload<double>(payload, img.raw); break;
    case DataType::u16: decode_payload<std::uint16_t>(payload, img.raw); break;
  }
  return img;
}

Image read_image(const std::filesystem::path& path) {
  try {
    return parse_image(read_file_bytes(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

namespace {

LabelVolume to_labels(Image img, const std::string& name) {
  const Header& h = img.header;
  require_3d(h);
  if (!is_integer(h.datatype)) throw ValidationError(name + ": label volumes require an integer datatype");
  if (!(h.scl_slope == 0.0f || h.scl_slope == 1.0f) || h.scl_inter != 0.0f) {
    throw ValidationError(name + ": label volumes must not carry intensity scaling");
  }
  std::vector<Label> data(img.raw.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    double v = img.raw[i];
    if (v < 0 || v > 65535) throw ValidationError(name + ": label value out of range [0, 65535]");
    data[i] = static_cast<Label>(v);
  }
  return LabelVolume(dims_of(h), spacing_of(h), std::move(data));
}

ScalarVolume to_scalars(Image img) {
  const Header& h = img.header;
  require_3d(h);
  if (h.scl_slope != 0.0f) {
    double slope = h.scl_slope, inter = h.scl_inter;
    for (double& v : img.raw) v = slope * v + inter;
  }
  return ScalarVolume(dims_of(h), spacing_of(h), std::move(img.raw));
}

bool is_label_image(const Header& h) {
  return is_integer(h.datatype) && (h.scl_slope == 0.0f || h.scl_slope == 1.0f) && h.scl_inter == 0.0f;
}

}  // namespace

LabelVolume read_label_volume(const std::filesystem::path& path) { return to_labels(read_image(path), path.string()); }

ScalarVolume read_scalar_volume(const std::filesystem::path& path) {
  try {
    return to_scalars(read_image(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::variant<ScalarVolume, LabelVolume> read_volume(const std::filesystem::path& path) {
  Image img = read_image(path);
  if (is_label_image(img.header)) {
    bool non_negative = true;
    for (double v : img.raw) non_negative = non_negative && v >= 0 && v <= 65535;
    if (non_negative) return to_labels(std::move(img), path.string());
  }
  return to_scalars(std::move(img));
}

namespace {

std::vector<std::uint8_t> encode_header(const Header& h, std::size_t payload_bytes) {
  for (int i = 0; i < h.ndim; ++i) {
    if (h.dim[i] > 32767) throw ValidationError("dimension exceeds NIfTI-1 limit of 32767");
  }
  std::vector<std::uint8_t> out(kDataOffset + payload_bytes, 0);
  store<std::int32_t>(out, 0, 348);
  store<std::int16_t>(out, 40, static_cast<std::int16_t>(h.ndim));
  for (int i = 0; i < 7; ++i) {
    store<std::int16_t>(out, 42 + 2 * i, static_cast<std::int16_t>(i < h.ndim ? h.dim[i] : 1));
  }
  store<std::int16_t>(out, 70, static_cast<std::int16_t>(h.datatype));
  store<std::int16_t>(out, 72, static_cast<std::int16_t>(bytes_per_voxel(h.datatype) * 8));
  store<float>(out, 76, 1.0f);  // qfac
  for (int i = 0; i < 3; ++i) store<float>(out, 80 + 4 * i, h.pixdim[i]);
  for (int i = 3; i < 7; ++i) store<float>(out, 80 + 4 * i, 1.0f);
  store<float>(out, 108, static_cast<float>(kDataOffset));
  store<float>(out, 112, h.scl_slope);
  store<float>(out, 116, h.scl_inter);
  out[123] = 2;                      // xyzt_units: mm
  store<std::int16_t>(out, 252, 1);  // qform_code: scanner, identity rotation
  std::memcpy(out.data() + 344, "n+1\0", 4);
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_image(const Header& h, std::span<const double> values) {
  std::size_t count = 1;
  for (int i = 0; i < h.ndim; ++i) count *= h.dim[i];
  if (count != values.size()) throw ValidationError("payload length does not match header dims");
  std::vector<std::uint8_t> out = encode_header(h, count * bytes_per_voxel(h.datatype));
  switch (h.datatype) {
    case DataType::u8: encode_payload<std::uint8_t>(values, out, kDataOffset); break;
    case DataType::i16: encode_payload<std::int16_t>(values, out, kDataOffset); break;
    case DataType::i32: encode_payload<std::int32_t>(values, out, kDataOffset); break;
    case DataType::f32: encode_payload<float>(values, out, kDataOffset); break;
    case DataType::f64: encode_payload<double>(values, out, kDataOffset); break;
    case DataType::u16: encode_payload<std::uint16_t>(values, out, kDataOffset); break;
  }
  return out;
}

std::vector<std::uint8_t> gzip(std::span<const std::uint8_t> in) {
  z_stream zs{};
  if (deflateInit2(&zs, 6, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw IoError("zlib initialisation failed");
  }
  std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(in.size())) + 32);
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw IoError("gzip compression failed");
  out.resize(zs.total_out);
  return out;
}

void write_image_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.extension() == ".gz") {
    write_bytes(path, gzip(bytes));
  } else {
    write_bytes(path, bytes);
  }
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

Header header_for(const Dims& d, const Spacing& s, DataType t) {
  Header h;
  h.ndim = 3;
  h.dim = {d.nx, d.ny, d.nz, 1, 1, 1, 1};
  h.datatype = t;
  h.pixdim = {static_cast<float>(s.sx()), static_cast<float>(s.sy()), static_cast<float>(s.sz())};
  return h;
}

}  // namespace

std::vector<std::uint8_t> encode_label_volume(const LabelVolume& vol) {
  Label max_label = 0;
  for (Label v : vol.values()) max_label = std::max(max_label, v);
  Header h = header_for(vol.dims(), vol.spacing(), max_label < 256 ? DataType::u8 : DataType::u16);
  h.scl_slope = 1.0f;
  std::size_t bpv = bytes_per_voxel(h.datatype);
  std::vector<std::uint8_t> bytes = encode_header(h, vol.size() * bpv);
  if (bpv == 1) {
    for (std::size_t i = 0; i < vol.size(); ++i) bytes[kDataOffset + i] = static_cast<std::uint8_t>(vol[i]);
  } else {
    std::memcpy(bytes.data() + kDataOffset, vol.values().data(), vol.size() * 2);
  }
  return bytes;
}

void write_label_volume(const LabelVolume& vol, const std::filesystem::path& path) {
  write_image_bytes(path, encode_label_volume(vol));
}

void write_scalar_volume(const ScalarVolume& vol, const std::filesystem::path& path) {
  Header h = header_for(vol.dims(), vol.spacing(), DataType::f64);
  write_image_bytes(path, encode_image(h, vol.values()));
}

}  // namespace cbctseg::nifti
