#pragma once

// Reader for the subset of DICOM Part 10 used by CT series exports:
// uncompressed little-endian pixel data in explicit or implicit VR.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "ctprep/error.hpp"

namespace ctprep {

namespace dicom {

struct Tag {
  std::uint16_t group;
  std::uint16_t element;
  constexpr std::uint32_t key() const { return (std::uint32_t{group} << 16) | element; }
  constexpr bool operator==(const Tag&) const = default;
};

inline constexpr Tag kMetaGroupLength{0x0002, 0x0000};
inline constexpr Tag kMetaVersion{0x0002, 0x0001};
inline constexpr Tag kMediaStorageSopClass{0x0002, 0x0002};
inline constexpr Tag kMediaStorageSopInstance{0x0002, 0x0003};
inline constexpr Tag kTransferSyntax{0x0002, 0x0010};
inline constexpr Tag kImageType{0x0008, 0x0008};
inline constexpr Tag kSopClassUid{0x0008, 0x0016};
inline constexpr Tag kSopInstanceUid{0x0008, 0x0018};
inline constexpr Tag kModality{0x0008, 0x0060};
inline constexpr Tag kPatientId{0x0010, 0x0020};
inline constexpr Tag kPatientAge{0x0010, 0x1010};
inline constexpr Tag kSliceThickness{0x0018, 0x0050};
inline constexpr Tag kConvolutionKernel{0x0018, 0x1210};
inline constexpr Tag kSeriesInstanceUid{0x0020, 0x000E};
inline constexpr Tag kInstanceNumber{0x0020, 0x0013};
inline constexpr Tag kImagePosition{0x0020, 0x0032};
inline constexpr Tag kImageOrientation{0x0020, 0x0037};
inline constexpr Tag kSamplesPerPixel{0x0028, 0x0002};
inline constexpr Tag kPhotometric{0x0028, 0x0004};
inline constexpr Tag kRows{0x0028, 0x0010};
inline constexpr Tag kColumns{0x0028, 0x0011};
inline constexpr Tag kPixelSpacing{0x0028, 0x0030};
inline constexpr Tag kBitsAllocated{0x0028, 0x0100};
inline constexpr Tag kBitsStored{0x0028, 0x0101};
inline constexpr Tag kHighBit{0x0028, 0x0102};
inline constexpr Tag kPixelRepresentation{0x0028, 0x0103};
inline constexpr Tag kRescaleIntercept{0x0028, 0x1052};
inline constexpr Tag kRescaleSlope{0x0028, 0x1053};
inline constexpr Tag kPixelData{0x7FE0, 0x0010};

inline constexpr Tag kItem{0xFFFE, 0xE000};
inline constexpr Tag kItemDelimiter{0xFFFE, 0xE00D};
inline constexpr Tag kSequenceDelimiter{0xFFFE, 0xE0DD};

inline constexpr std::string_view kImplicitVrLittleEndian = "1.2.840.10008.1.2";
inline constexpr std::string_view kExplicitVrLittleEndian = "1.2.840.10008.1.2.1";
inline constexpr std::string_view kCtImageStorage = "1.2.840.10008.5.1.4.1.1.2";

inline constexpr std::uint32_t kUndefinedLength = 0xFFFFFFFFu;

/// VRs whose explicit encoding uses 2 reserved bytes and a 32-bit length.
constexpr bool has_long_length(std::string_view vr) {
  return vr == "OB" || vr == "OW" || vr == "OF" || vr == "OD" || vr == "OL" || vr == "OV" ||
         vr == "SQ" || vr == "UT" || vr == "UN" || vr == "UC" || vr == "UR" || vr == "SV" ||
         vr == "UV";
}

constexpr bool is_known_vr(char a, char b) {
  constexpr std::string_view kVrs[] = {"AE", "AS", "AT", "CS", "DA", "DS", "DT", "FL", "FD",
                                       "IS", "LO", "LT", "OB", "OD", "OF", "OL", "OV", "OW",
                                       "PN", "SH", "SL", "SQ", "SS", "ST", "SV", "TM", "UC",
                                       "UI", "UL", "UN", "UR", "US", "UT", "UV"};
  for (auto vr : kVrs) {
    if (vr[0] == a && vr[1] == b) return true;
  }
  return false;
}

/// Strips the trailing NUL/space padding that DICOM uses to reach even lengths.
inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\0')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

inline std::vector<std::string> split_multi(std::string_view s) {
  std::vector<std::string> out;
  s = trim(s);
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find('\\', start);
    out.emplace_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::vector<double> parse_decimals(std::string_view s, Tag tag) {
  std::vector<double> out;
  for (const auto& token : split_multi(s)) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc{} || ptr != token.data() + token.size()) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "(%04X,%04X) bad decimal '%s'", tag.group, tag.element,
                    token.c_str());
      throw Error(ErrorCode::MalformedElement, buf);
    }
    out.push_back(v);
  }
  return out;
}

/// Age string "nnnY" / "nnnM" / "nnnW" / "nnnD" to whole years.
inline std::optional<int> parse_age(std::string_view s) {
  s = trim(s);
  if (s.size() != 4) return std::nullopt;
  int n = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + 3, n);
  if (ec != std::errc{} || ptr != s.data() + 3) return std::nullopt;
  switch (s[3]) {
    case 'Y': return n;
    case 'M': return n / 12;
    case 'W': return n / 52;
    case 'D': return n / 365;
    default: return std::nullopt;
  }
}

}  // namespace dicom

/// One image from a CT series file. Geometry follows the DICOM patient
/// coordinate system; `orientation` holds the row direction then the column
/// direction.
struct DicomSlice {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::array<double, 2> pixel_spacing{1.0, 1.0};
  std::array<double, 3> image_position{0.0, 0.0, 0.0};
  std::array<double, 6> orientation{1.0, 0.0, 0.0, 0.0, 1.0, 0.0};
  std::vector<std::string> image_type;
  std::optional<std::string> convolution_kernel;
  double rescale_slope = 1.0;
  double rescale_intercept = 0.0;
  std::vector<std::int32_t> raw_pixels;

  std::string series_uid;
  std::string patient_id;
  std::optional<int> patient_age_years;
  std::optional<int> instance_number;
  std::optional<double> slice_thickness;
  bool pixels_signed = true;

  std::array<double, 3> normal() const {
    const auto& o = orientation;
    return {o[1] * o[5] - o[2] * o[4], o[2] * o[3] - o[0] * o[5], o[0] * o[4] - o[1] * o[3]};
  }

  double position_along(const std::array<double, 3>& n) const {
    return image_position[0] * n[0] + image_position[1] * n[1] + image_position[2] * n[2];
  }

  bool operator==(const DicomSlice&) const = default;
};

struct DicomSeries {
  std::string series_uid;
  std::string patient_id;
  std::optional<int> patient_age_years;
  std::vector<DicomSlice> slices;
  std::vector<std::filesystem::path> source_paths;
};

namespace dicom {

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t pos() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  bool at_end() const noexcept { return pos_ >= bytes_.size(); }
  void seek(std::size_t p) noexcept { pos_ = p; }

  void require(std::size_t n, const char* what) const {
    if (remaining() < n) throw Error(ErrorCode::TruncatedFile, what);
  }
  std::uint16_t u16() {
    require(2, "unexpected end of file");
    std::uint16_t v = std::uint16_t(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    require(4, "unexpected end of file");
    std::uint32_t v = std::uint32_t(bytes_[pos_]) | (std::uint32_t(bytes_[pos_ + 1]) << 8) |
                      (std::uint32_t(bytes_[pos_ + 2]) << 16) | (std::uint32_t(bytes_[pos_ + 3]) << 24);
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    require(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t peek(std::size_t offset) const { return bytes_[pos_ + offset]; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

struct ElementHeader {
  Tag tag{};
  std::string vr;  // empty for implicit VR
  std::uint32_t length = 0;
};

inline ElementHeader read_header(ByteReader& in, bool explicit_vr) {
  ElementHeader h;
  h.tag.group = in.u16();
  h.tag.element = in.u16();
  // Item and delimiter tags never carry a VR.
  if (h.tag.group == 0xFFFE) {
    h.length = in.u32();
    return h;
  }
  if (explicit_vr) {
    auto vr = in.take(2, "truncated VR");
    h.vr.assign(reinterpret_cast<const char*>(vr.data()), 2);
    if (has_long_length(h.vr)) {
      in.take(2, "truncated element header");
      h.length = in.u32();
    } else {
      h.length = in.u16();
    }
  } else {
    h.length = in.u32();
  }
  return h;
}

inline void skip_undefined_sequence(ByteReader& in, bool explicit_vr);

inline void skip_item_contents(ByteReader& in, bool explicit_vr) {
  while (true) {
    auto h = read_header(in, explicit_vr);
    if (h.tag == kItemDelimiter) return;
    if (h.length == kUndefinedLength) {
      skip_undefined_sequence(in, explicit_vr);
    } else {
      in.take(h.length, "element runs past end of file");
    }
  }
}

inline void skip_undefined_sequence(ByteReader& in, bool explicit_vr) {
  while (true) {
    auto h = read_header(in, explicit_vr);
    if (h.tag == kSequenceDelimiter) return;
    if (!(h.tag == kItem)) throw Error(ErrorCode::MalformedElement, "expected sequence item");
    if (h.length == kUndefinedLength) {
      skip_item_contents(in, explicit_vr);
    } else {
      in.take(h.length, "sequence item runs past end of file");
    }
  }
}

inline std::string_view as_text(std::span<const std::uint8_t> v) {
  return {reinterpret_cast<const char*>(v.data()), v.size()};
}

inline std::uint16_t as_u16(std::span<const std::uint8_t> v, Tag tag) {
  if (v.size() < 2) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "(%04X,%04X) too short for US", tag.group, tag.element);
    throw Error(ErrorCode::MalformedElement, buf);
  }
  return std::uint16_t(v[0] | (v[1] << 8));
}

inline bool is_dicom_prefix(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 132 && std::memcmp(bytes.data() + 128, "DICM", 4) == 0) return true;
  if (bytes.size() >= 8) {
    std::uint16_t group = std::uint16_t(bytes[0] | (bytes[1] << 8));
    return group == 0x0002 || group == 0x0008;
  }
  return false;
}

}  // namespace dicom

/// Parses an in-memory Part 10 file. Parsing stops at the pixel data element;
/// anything after it is ignored.
inline DicomSlice parse_buffer(std::span<const std::uint8_t> bytes) {
  using namespace dicom;
  if (!is_dicom_prefix(bytes)) throw Error(ErrorCode::NotDicom, "no DICM magic or known group");

  ByteReader in(bytes);
  if (bytes.size() >= 132 && std::memcmp(bytes.data() + 128, "DICM", 4) == 0) in.seek(132);

  // Files without a meta header: sniff whether the first element has a VR.
  bool dataset_explicit = bytes.size() >= in.pos() + 6 &&
                          is_known_vr(char(bytes[in.pos() + 4]), char(bytes[in.pos() + 5]));
  bool have_pixels = false;
  std::uint16_t bits_allocated = 16;
  std::uint16_t pixel_representation = 0;
  std::uint16_t samples_per_pixel = 1;
  std::span<const std::uint8_t> pixel_bytes;
  DicomSlice s;

  while (!in.at_end()) {
    // Trailing padding shorter than an element header is tolerated.
    if (in.remaining() < 8) break;
    bool in_meta = in.peek(0) == 0x02 && in.peek(1) == 0x00;
    auto h = read_header(in, in_meta || dataset_explicit);

    if (h.length == kUndefinedLength) {
      if (h.tag == kPixelData) {
        throw Error(ErrorCode::UnsupportedTransferSyntax, "encapsulated (compressed) pixel data");
      }
      skip_undefined_sequence(in, in_meta || dataset_explicit);
      continue;
    }
    auto value = in.take(h.length, "element value runs past end of file");

    switch (h.tag.key()) {
      case kTransferSyntax.key(): {
        auto ts = trim(as_text(value));
        if (ts == kExplicitVrLittleEndian) {
          dataset_explicit = true;
        } else if (ts == kImplicitVrLittleEndian) {
          dataset_explicit = false;
        } else {
          throw Error(ErrorCode::UnsupportedTransferSyntax,
                      "transfer syntax " + std::string(ts) + " (decompress before ingest)");
        }
        break;
      }
      case kImageType.key(): s.image_type = split_multi(as_text(value)); break;
      case kPatientId.key(): s.patient_id = std::string(trim(as_text(value))); break;
      case kPatientAge.key(): s.patient_age_years = parse_age(as_text(value)); break;
      case kSliceThickness.key(): {
        auto v = parse_decimals(as_text(value), h.tag);
        if (!v.empty()) s.slice_thickness = v[0];
        break;
      }
      case kConvolutionKernel.key(): {
        auto k = trim(as_text(value));
        if (!k.empty()) s.convolution_kernel = std::string(k);
        break;
      }
      case kSeriesInstanceUid.key(): s.series_uid = std::string(trim(as_text(value))); break;
      case kInstanceNumber.key(): {
        auto text = trim(as_text(value));
        int n = 0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
        if (ec == std::errc{} && ptr == text.data() + text.size()) s.instance_number = n;
        break;
      }
      case kImagePosition.key(): {
        auto v = parse_decimals(as_text(value), h.tag);
        if (v.size() != 3) throw Error(ErrorCode::MalformedElement, "ImagePositionPatient needs 3 values");
        std::copy(v.begin(), v.end(), s.image_position.begin());
        break;
      }
      case kImageOrientation.key(): {
        auto v = parse_decimals(as_text(value), h.tag);
        if (v.size() != 6) throw Error(ErrorCode::MalformedElement, "ImageOrientationPatient needs 6 values");
        std::copy(v.begin(), v.end(), s.orientation.begin());
        break;
      }
      case kSamplesPerPixel.key(): samples_per_pixel = as_u16(value, h.tag); break;
      case kRows.key(): s.rows = as_u16(value, h.tag); break;
      case kColumns.key(): s.cols = as_u16(value, h.tag); break;
      case kPixelSpacing.key(): {
        auto v = parse_decimals(as_text(value), h.tag);
        if (v.size() != 2) throw Error(ErrorCode::MalformedElement, "PixelSpacing needs 2 values");
        s.pixel_spacing = {v[0], v[1]};
        break;
      }
      case kBitsAllocated.key(): bits_allocated = as_u16(value, h.tag); break;
      case kPixelRepresentation.key(): pixel_representation = as_u16(value, h.tag); break;
      case kRescaleIntercept.key(): {
        auto v = parse_decimals(as_text(value), h.tag);
        if (!v.empty()) s.rescale_intercept = v[0];
        break;
      }
      case kRescaleSlope.key(): {
        auto v = parse_decimals(as_text(value), h.tag);
        if (!v.empty()) s.rescale_slope = v[0];
        break;
      }
      case kPixelData.key():
        pixel_bytes = value;
        have_pixels = true;
        break;
      default: break;
    }
    if (have_pixels) break;
  }

  if (!have_pixels) throw Error(ErrorCode::MissingPixelData, "no (7FE0,0010) element");
  if (s.rows == 0 || s.cols == 0) throw Error(ErrorCode::MalformedElement, "rows/columns missing or zero");
  if (samples_per_pixel != 1) throw Error(ErrorCode::MalformedElement, "only single-sample images are supported");
  if (bits_allocated != 8 && bits_allocated != 16) {
    throw Error(ErrorCode::MalformedElement, "BitsAllocated must be 8 or 16");
  }

  const std::size_t n = std::size_t{s.rows} * s.cols;
  const std::size_t bytes_per = bits_allocated / 8;
  if (pixel_bytes.size() < n * bytes_per) {
    throw Error(ErrorCode::MissingPixelData, "pixel data shorter than rows*cols");
  }
  s.pixels_signed = pixel_representation == 1;
  s.raw_pixels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (bytes_per == 2) {
      std::uint16_t u = std::uint16_t(pixel_bytes[2 * i] | (pixel_bytes[2 * i + 1] << 8));
      s.raw_pixels[i] = s.pixels_signed ? std::int32_t(std::int16_t(u)) : std::int32_t(u);
    } else {
      std::uint8_t u = pixel_bytes[i];
      s.raw_pixels[i] = s.pixels_signed ? std::int32_t(std::int8_t(u)) : std::int32_t(u);
    }
  }

  if (!(s.pixel_spacing[0] > 0.0) || !(s.pixel_spacing[1] > 0.0)) {
    throw Error(ErrorCode::MalformedElement, "pixel spacing must be positive");
  }
  const auto& o = s.orientation;
  double nr = std::sqrt(o[0] * o[0] + o[1] * o[1] + o[2] * o[2]);
  double nc = std::sqrt(o[3] * o[3] + o[4] * o[4] + o[5] * o[5]);
  double dot = o[0] * o[3] + o[1] * o[4] + o[2] * o[5];
  if (std::abs(nr - 1.0) > 1e-3 || std::abs(nc - 1.0) > 1e-3 || std::abs(dot) >= 1e-2) {
    throw Error(ErrorCode::MalformedElement, "orientation cosines are not orthonormal");
  }
  return s;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  f.seekg(0, std::ios::end);
  auto size = static_cast<std::size_t>(f.tellg());
  f.seekg(0);
  std::vector<std::uint8_t> bytes(size);
  if (size > 0 && !f.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(size))) {
    throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  }
  return bytes;
}

inline DicomSlice parse_file(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  try {
    return parse_buffer(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

/// Cheap check used by directory ingest to skip non-DICOM files.
inline bool looks_like_dicom(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::array<std::uint8_t, 132> head{};
  f.read(reinterpret_cast<char*>(head.data()), head.size());
  auto got = static_cast<std::size_t>(f.gcount());
  return dicom::is_dicom_prefix(std::span<const std::uint8_t>(head.data(), got));
}

/// All regular files under `root` in lexicographic path order.
inline std::vector<std::filesystem::path> list_files_recursive(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::exists(root)) return out;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace detail {

/// Normal of the most common orientation in a series; ties go to the
/// lexicographically smallest cosine vector so the choice never depends on
/// input order.
inline std::array<double, 3> reference_normal(const std::vector<const DicomSlice*>& slices) {
  std::map<std::array<double, 6>, int> counts;
  for (const auto* s : slices) ++counts[s->orientation];
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  DicomSlice probe;
  probe.orientation = best->first;
  return probe.normal();
}

}  // namespace detail

/// Groups parsed slices by series UID (series returned in UID order) and
/// sorts each series along its slice normal. Ties fall back to instance
/// number, then path.
inline std::vector<DicomSeries> group_series(
    const std::vector<std::pair<std::filesystem::path, DicomSlice>>& slices) {
  std::map<std::string, std::vector<std::size_t>> by_uid;
  for (std::size_t i = 0; i < slices.size(); ++i) by_uid[slices[i].second.series_uid].push_back(i);

  std::vector<DicomSeries> out;
  for (auto& [uid, members] : by_uid) {
    const DicomSlice& first = slices[members.front()].second;
    std::vector<const DicomSlice*> ptrs;
    for (auto i : members) {
      const DicomSlice& s = slices[i].second;
      if (s.rows != first.rows || s.cols != first.cols || s.pixel_spacing != first.pixel_spacing) {
        throw Error(ErrorCode::InconsistentGeometry,
                    "series " + uid + " mixes image sizes or pixel spacings");
      }
      ptrs.push_back(&s);
    }
    auto normal = detail::reference_normal(ptrs);

    auto key = [&](std::size_t i) {
      const DicomSlice& s = slices[i].second;
      return std::make_tuple(s.position_along(normal), s.instance_number.value_or(INT32_MIN),
                             slices[i].first.string());
    };
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });

    DicomSeries series;
    series.series_uid = uid;
    for (auto i : members) {
      const DicomSlice& s = slices[i].second;
      if (series.patient_id.empty()) series.patient_id = s.patient_id;
      if (!series.patient_age_years && s.patient_age_years) series.patient_age_years = s.patient_age_years;
      series.slices.push_back(s);
      series.source_paths.push_back(slices[i].first);
    }
    out.push_back(std::move(series));
  }
  return out;
}

/// Sidecar of `series_uid, age` records (comma or whitespace separated,
/// '#' starts a comment). A missing file yields an empty map.
inline std::map<std::string, int> load_age_sidecar(const std::filesystem::path& path) {
  std::map<std::string, int> ages;
  std::ifstream f(path);
  if (!f) return ages;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::string_view view = dicom::trim(line);
    if (view.empty()) continue;
    auto space = view.find_first_of(" \t");
    if (space == std::string_view::npos) {
      throw Error(ErrorCode::MalformedElement, path.string() + ":" + std::to_string(line_no) + ": expected uid and age");
    }
    std::string uid(view.substr(0, space));
    auto rest = dicom::trim(view.substr(space + 1));
    while (!rest.empty() && (rest.front() == ' ' || rest.front() == '\t')) rest.remove_prefix(1);
    int age = 0;
    auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), age);
    if (ec != std::errc{} || age < 0) {
      throw Error(ErrorCode::MalformedElement, path.string() + ":" + std::to_string(line_no) + ": bad age");
    }
    ages[uid] = age;
  }
  return ages;
}

}  // namespace ctprep
