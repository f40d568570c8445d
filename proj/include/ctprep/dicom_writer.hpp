#pragma once

// Minimal Part 10 writer used by the phantom generator. Emits exactly the
// elements the reader understands, in ascending tag order.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "ctprep/dicom.hpp"
#include "ctprep/error.hpp"
#include "ctprep/io.hpp"

namespace ctprep::phantom {

/// Shortest decimal that fits the 16-byte DS limit.
inline std::string format_ds(double value) {
  if (value == 0.0) return "0";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  std::string s(buf, ptr);
  if (ec == std::errc{} && s.size() <= 16) return s;
  for (int precision = 15; precision > 0; --precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, value);
    if (std::string_view(buf).size() <= 16) return buf;
  }
  throw Error(ErrorCode::MalformedElement, "value does not fit a DS element");
}

/// The value a reader will see after a DS write.
inline double quantize_ds(double value) {
  auto s = format_ds(value);
  double out = 0.0;
  std::from_chars(s.data(), s.data() + s.size(), out);
  return out;
}

inline std::string join_ds(std::initializer_list<double> values) {
  std::string out;
  for (double v : values) {
    if (!out.empty()) out += '\\';
    out += format_ds(v);
  }
  return out;
}

struct WriteOptions {
  bool explicit_vr = true;
  std::string sop_instance_uid = "1.2.826.0.1.3680043.10.999.1";
};

namespace detail {

class ElementWriter {
 public:
  ElementWriter(std::vector<std::uint8_t>& out, bool explicit_vr) : out_(out), w_(out), explicit_(explicit_vr) {}

  void text(dicom::Tag tag, std::string_view vr, std::string value) {
    if (value.size() % 2 == 1) value.push_back(vr == "UI" ? '\0' : ' ');
    header(tag, vr, std::uint32_t(value.size()));
    w_.append_text(value);
  }
  void u16(dicom::Tag tag, std::uint16_t value) {
    header(tag, "US", 2);
    w_.append_u16(value);
  }
  void u32(dicom::Tag tag, std::uint32_t value) {
    header(tag, "UL", 4);
    w_.append_u32(value);
  }
  void bytes(dicom::Tag tag, std::string_view vr, const std::vector<std::uint8_t>& value) {
    header(tag, vr, std::uint32_t(value.size()));
    w_.append(value);
  }

 private:
  void header(dicom::Tag tag, std::string_view vr, std::uint32_t length) {
    w_.append_u16(tag.group);
    w_.append_u16(tag.element);
    if (explicit_ || tag.group == 0x0002) {
      w_.append_text(vr);
      if (dicom::has_long_length(vr)) {
        w_.append_u16(0);
        w_.append_u32(length);
      } else {
        w_.append_u16(std::uint16_t(length));
      }
    } else {
      w_.append_u32(length);
    }
  }

  std::vector<std::uint8_t>& out_;
  io::LeWriter w_;
  bool explicit_;
};

}  // namespace detail

/// Serializes a slice. Decimal fields are written with format_ds, so pass
/// values through quantize_ds first when an exact round trip matters.
inline std::vector<std::uint8_t> encode_dicom(const DicomSlice& s, const WriteOptions& opt = {}) {
  using namespace dicom;
  if (s.raw_pixels.size() != std::size_t{s.rows} * s.cols) {
    throw Error(ErrorCode::MalformedElement, "raw_pixels size does not match rows*cols");
  }
  std::vector<std::uint8_t> out(128, 0);
  out.insert(out.end(), {'D', 'I', 'C', 'M'});

  // Meta group, written to a side buffer first for its group length.
  std::vector<std::uint8_t> meta;
  {
    detail::ElementWriter m(meta, true);
    m.bytes(kMetaVersion, "OB", {0x00, 0x01});
    m.text(kMediaStorageSopClass, "UI", std::string(kCtImageStorage));
    m.text(kMediaStorageSopInstance, "UI", opt.sop_instance_uid);
    m.text(kTransferSyntax, "UI",
           std::string(opt.explicit_vr ? kExplicitVrLittleEndian : kImplicitVrLittleEndian));
  }
  detail::ElementWriter head(out, true);
  head.u32(kMetaGroupLength, std::uint32_t(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());

  detail::ElementWriter e(out, opt.explicit_vr);
  std::string image_type;
  for (const auto& t : s.image_type) {
    if (!image_type.empty()) image_type += '\\';
    image_type += t;
  }
  e.text(kImageType, "CS", image_type);
  e.text(kSopClassUid, "UI", std::string(kCtImageStorage));
  e.text(kSopInstanceUid, "UI", opt.sop_instance_uid);
  e.text(kModality, "CS", "CT");
  e.text(kPatientId, "LO", s.patient_id);
  if (s.patient_age_years) {
    char age[8];
    std::snprintf(age, sizeof age, "%03dY", *s.patient_age_years);
    e.text(kPatientAge, "AS", age);
  }
  if (s.slice_thickness) e.text(kSliceThickness, "DS", format_ds(*s.slice_thickness));
  if (s.convolution_kernel) e.text(kConvolutionKernel, "SH", *s.convolution_kernel);
  e.text(kSeriesInstanceUid, "UI", s.series_uid);
  if (s.instance_number) e.text(kInstanceNumber, "IS", std::to_string(*s.instance_number));
  const auto& p = s.image_position;
  e.text(kImagePosition, "DS", join_ds({p[0], p[1], p[2]}));
  const auto& o = s.orientation;
  e.text(kImageOrientation, "DS", join_ds({o[0], o[1], o[2], o[3], o[4], o[5]}));
  e.u16(kSamplesPerPixel, 1);
  e.text(kPhotometric, "CS", "MONOCHROME2");
  e.u16(kRows, std::uint16_t(s.rows));
  e.u16(kColumns, std::uint16_t(s.cols));
  e.text(kPixelSpacing, "DS", join_ds({s.pixel_spacing[0], s.pixel_spacing[1]}));
  e.u16(kBitsAllocated, 16);
  e.u16(kBitsStored, 16);
  e.u16(kHighBit, 15);
  e.u16(kPixelRepresentation, s.pixels_signed ? 1 : 0);
  e.text(kRescaleIntercept, "DS", format_ds(s.rescale_intercept));
  e.text(kRescaleSlope, "DS", format_ds(s.rescale_slope));

  std::vector<std::uint8_t> pixels;
  pixels.reserve(s.raw_pixels.size() * 2);
  for (auto v : s.raw_pixels) {
    bool fits = s.pixels_signed ? (v >= -32768 && v <= 32767) : (v >= 0 && v <= 65535);
    if (!fits) throw Error(ErrorCode::MalformedElement, "pixel value out of 16-bit range");
    auto u = static_cast<std::uint16_t>(v);
    pixels.push_back(std::uint8_t(u & 0xFF));
    pixels.push_back(std::uint8_t(u >> 8));
  }
  e.bytes(kPixelData, "OW", pixels);
  return out;
}

inline void write_dicom(const DicomSlice& s, const std::filesystem::path& path, const WriteOptions& opt = {}) {
  io::write_file_atomic(path, encode_dicom(s, opt));
}

}  // namespace ctprep::phantom
