#pragma once

// Single-file NIfTI-1 (.nii), uncompressed, little endian.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <vector>

#include "ctprep/dicom.hpp"
#include "ctprep/error.hpp"
#include "ctprep/io.hpp"
#include "ctprep/volume.hpp"

namespace ctprep {

static_assert(std::endian::native == std::endian::little, "NIfTI writer assumes a little-endian host");

namespace nifti {

inline constexpr std::int32_t kHeaderSize = 348;
inline constexpr float kVoxOffset = 352.0f;
inline constexpr std::int16_t kDtUint8 = 2;
inline constexpr std::int16_t kDtInt16 = 4;
inline constexpr std::int16_t kDtFloat32 = 16;
inline constexpr std::int16_t kDtFloat64 = 64;
inline constexpr std::uint8_t kUnitsMm = 2;

// Byte offsets within the 348-byte header.
inline constexpr std::size_t kOffDim = 40;
inline constexpr std::size_t kOffDatatype = 70;
inline constexpr std::size_t kOffBitpix = 72;
inline constexpr std::size_t kOffPixdim = 76;
inline constexpr std::size_t kOffVoxOffset = 108;
inline constexpr std::size_t kOffSclSlope = 112;
inline constexpr std::size_t kOffSclInter = 116;
inline constexpr std::size_t kOffXyztUnits = 123;
inline constexpr std::size_t kOffDescrip = 148;
inline constexpr std::size_t kOffQformCode = 252;
inline constexpr std::size_t kOffQoffset = 268;
inline constexpr std::size_t kOffMagic = 344;

}  // namespace nifti

struct NiftiHeader {
  std::int32_t sizeof_hdr = nifti::kHeaderSize;
  std::array<std::int16_t, 8> dim{};
  std::int16_t datatype = nifti::kDtFloat32;
  std::int16_t bitpix = 32;
  std::array<float, 8> pixdim{};
  float vox_offset = nifti::kVoxOffset;
  float scl_slope = 1.0f;
  float scl_inter = 0.0f;
  std::array<float, 3> qoffset{};
  std::array<char, 4> magic{'n', '+', '1', '\0'};
};

inline NiftiHeader make_header(const Volume& v) {
  NiftiHeader h;
  h.dim = {3,
           static_cast<std::int16_t>(v.width()),
           static_cast<std::int16_t>(v.height()),
           static_cast<std::int16_t>(v.n_slices()),
           1, 1, 1, 1};
  h.pixdim = {1.0f, float(v.spacing[2]), float(v.spacing[1]), float(v.spacing[0]), 0.0f, 0.0f, 0.0f, 0.0f};
  h.qoffset = {float(v.origin[0]), float(v.origin[1]), float(v.origin[2])};
  return h;
}

inline std::vector<std::uint8_t> encode_nifti(const Volume& v) {
  if (v.data.empty()) throw Error(ErrorCode::IoFailure, "refusing to write an empty volume");
  if (v.width() > 32767 || v.height() > 32767 || v.n_slices() > 32767) {
    throw Error(ErrorCode::IoFailure, "volume dimension exceeds NIfTI-1 limit");
  }
  auto h = make_header(v);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(nifti::kVoxOffset), 0);
  io::LeWriter w(out);
  w.put_at<std::int32_t>(0, h.sizeof_hdr);
  for (std::size_t i = 0; i < 8; ++i) w.put_at<std::int16_t>(nifti::kOffDim + 2 * i, h.dim[i]);
  w.put_at<std::int16_t>(nifti::kOffDatatype, h.datatype);
  w.put_at<std::int16_t>(nifti::kOffBitpix, h.bitpix);
  for (std::size_t i = 0; i < 8; ++i) w.put_at<float>(nifti::kOffPixdim + 4 * i, h.pixdim[i]);
  w.put_at<float>(nifti::kOffVoxOffset, h.vox_offset);
  w.put_at<float>(nifti::kOffSclSlope, h.scl_slope);
  w.put_at<float>(nifti::kOffSclInter, h.scl_inter);
  w.put_at<std::uint8_t>(nifti::kOffXyztUnits, nifti::kUnitsMm);
  constexpr char kDescrip[] = "ctprep";
  std::memcpy(out.data() + nifti::kOffDescrip, kDescrip, sizeof kDescrip - 1);
  for (std::size_t i = 0; i < 3; ++i) w.put_at<float>(nifti::kOffQoffset + 4 * i, h.qoffset[i]);
  std::memcpy(out.data() + nifti::kOffMagic, h.magic.data(), 4);
  // Bytes 348..351 stay zero: no extensions.

  const auto& data = v.data.data();
  auto bytes = std::as_bytes(std::span<const float>(data));
  w.append({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()});
  return out;
}

inline void write_nifti(const Volume& v, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_nifti(v));
}

inline NiftiHeader decode_header(std::span<const std::uint8_t> bytes) {
  using io::get_le;
  if (bytes.size() < std::size_t(nifti::kHeaderSize)) throw Error(ErrorCode::UnsupportedVariant, "shorter than a NIfTI-1 header");
  NiftiHeader h;
  h.sizeof_hdr = get_le<std::int32_t>(bytes, 0);
  if (h.sizeof_hdr != nifti::kHeaderSize) {
    auto u = static_cast<std::uint32_t>(h.sizeof_hdr);
    auto swapped = (u >> 24) | ((u >> 8) & 0xFF00u) | ((u << 8) & 0xFF0000u) | (u << 24);
    if (swapped == std::uint32_t(nifti::kHeaderSize)) {
      throw Error(ErrorCode::UnsupportedVariant, "big-endian NIfTI is not supported");
    }
    throw Error(ErrorCode::UnsupportedVariant, "sizeof_hdr is not 348");
  }
  std::memcpy(h.magic.data(), bytes.data() + nifti::kOffMagic, 4);
  if (!(h.magic[0] == 'n' && h.magic[1] == '+' && h.magic[2] == '1' && h.magic[3] == '\0')) {
    throw Error(ErrorCode::UnsupportedVariant, "only single-file n+1 NIfTI is supported");
  }
  for (std::size_t i = 0; i < 8; ++i) h.dim[i] = get_le<std::int16_t>(bytes, nifti::kOffDim + 2 * i);
  h.datatype = get_le<std::int16_t>(bytes, nifti::kOffDatatype);
  h.bitpix = get_le<std::int16_t>(bytes, nifti::kOffBitpix);
  for (std::size_t i = 0; i < 8; ++i) h.pixdim[i] = get_le<float>(bytes, nifti::kOffPixdim + 4 * i);
  h.vox_offset = get_le<float>(bytes, nifti::kOffVoxOffset);
  h.scl_slope = get_le<float>(bytes, nifti::kOffSclSlope);
  h.scl_inter = get_le<float>(bytes, nifti::kOffSclInter);
  for (std::size_t i = 0; i < 3; ++i) h.qoffset[i] = get_le<float>(bytes, nifti::kOffQoffset + 4 * i);
  return h;
}

inline Volume decode_nifti(std::span<const std::uint8_t> bytes) {
  auto h = decode_header(bytes);
  bool three_d = h.dim[0] == 3 || (h.dim[0] == 4 && h.dim[4] == 1);
  if (!three_d || h.dim[1] <= 0 || h.dim[2] <= 0 || h.dim[3] <= 0) {
    throw Error(ErrorCode::UnsupportedVariant, "only 3-D volumes are supported");
  }
  const std::size_t width = std::size_t(h.dim[1]), height = std::size_t(h.dim[2]), slices = std::size_t(h.dim[3]);
  std::size_t bytes_per = 0;
  switch (h.datatype) {
    case nifti::kDtUint8: bytes_per = 1; break;
    case nifti::kDtInt16: bytes_per = 2; break;
    case nifti::kDtFloat32: bytes_per = 4; break;
    case nifti::kDtFloat64: bytes_per = 8; break;
    default: throw Error(ErrorCode::UnsupportedVariant, "unsupported datatype " + std::to_string(h.datatype));
  }
  const auto offset = static_cast<std::size_t>(h.vox_offset);
  const std::size_t n = width * height * slices;
  if (h.vox_offset < 348.0f || bytes.size() < offset + n * bytes_per) {
    throw Error(ErrorCode::TruncatedFile, "voxel data shorter than header dimensions");
  }

  auto spacing_of = [](float p) { return p > 0.0f ? double(p) : 1.0; };
  Volume v(slices, height, width, {spacing_of(h.pixdim[3]), spacing_of(h.pixdim[2]), spacing_of(h.pixdim[1])});
  v.origin = {double(h.qoffset[0]), double(h.qoffset[1]), double(h.qoffset[2])};

  auto& out = v.data.data();
  const std::uint8_t* src = bytes.data() + offset;
  for (std::size_t i = 0; i < n; ++i) {
    switch (h.datatype) {
      case nifti::kDtUint8: out[i] = float(src[i]); break;
      case nifti::kDtInt16: out[i] = float(io::get_le<std::int16_t>(bytes, offset + 2 * i)); break;
      case nifti::kDtFloat32: std::memcpy(&out[i], src + 4 * i, 4); break;
      case nifti::kDtFloat64: out[i] = float(io::get_le<double>(bytes, offset + 8 * i)); break;
    }
  }
  bool identity_scale = h.scl_slope == 0.0f || (h.scl_slope == 1.0f && h.scl_inter == 0.0f);
  if (!identity_scale) {
    for (auto& x : out) x = x * h.scl_slope + h.scl_inter;
  }
  return v;
}

inline Volume read_nifti(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  try {
    return decode_nifti(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace ctprep
