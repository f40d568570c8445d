#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <initializer_list>
#include <optional>
#include <cmath>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ctprep/dicom.hpp"
#include "ctprep/error.hpp"

namespace ctprep {

enum class Orientation { Axial, Sagittal, Coronal, Mixed };
enum class Decision { Accepted, Excluded, NeedsReview };
enum class ExclusionReason { None, NonAxial, Localiser, BoneReformat, SuspectedSplitBrain };

constexpr std::string_view to_string(Orientation o) {
  switch (o) {
    case Orientation::Axial: return "Axial";
    case Orientation::Sagittal: return "Sagittal";
    case Orientation::Coronal: return "Coronal";
    case Orientation::Mixed: return "Mixed";
  }
  return "?";
}
constexpr std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::Accepted: return "Accepted";
    case Decision::Excluded: return "Excluded";
    case Decision::NeedsReview: return "NeedsReview";
  }
  return "?";
}
constexpr std::string_view to_string(ExclusionReason r) {
  switch (r) {
    case ExclusionReason::None: return "None";
    case ExclusionReason::NonAxial: return "NonAxial";
    case ExclusionReason::Localiser: return "Localiser";
    case ExclusionReason::BoneReformat: return "BoneReformat";
    case ExclusionReason::SuspectedSplitBrain: return "SuspectedSplitBrain";
  }
  return "?";
}

template <typename E>
E parse_enum(std::string_view text, std::initializer_list<E> values) {
  for (E v : values) {
    if (to_string(v) == text) return v;
  }
  throw Error(ErrorCode::CorruptManifest, "unknown enum value '" + std::string(text) + "'");
}

inline Orientation parse_orientation(std::string_view s) {
  return parse_enum(s, {Orientation::Axial, Orientation::Sagittal, Orientation::Coronal, Orientation::Mixed});
}
inline Decision parse_decision(std::string_view s) {
  return parse_enum(s, {Decision::Accepted, Decision::Excluded, Decision::NeedsReview});
}
inline ExclusionReason parse_reason(std::string_view s) {
  return parse_enum(s, {ExclusionReason::None, ExclusionReason::NonAxial, ExclusionReason::Localiser,
                        ExclusionReason::BoneReformat, ExclusionReason::SuspectedSplitBrain});
}

struct TriageVerdict {
  std::string series_uid;
  Decision decision = Decision::Accepted;
  ExclusionReason reason = ExclusionReason::None;
  Orientation orientation = Orientation::Axial;

  bool operator==(const TriageVerdict&) const = default;
};

struct TriageConfig {
  std::size_t localiser_slice_threshold = 3;
  std::size_t split_review_threshold = 25;
  std::set<std::string> bone_tokens{"BONE", "BONEPLUS", "H60S", "H70H"};
  std::set<std::string> localiser_tokens{"LOCALIZER", "SCOUT"};
};

inline constexpr double kOrientationTieTolerance = 1e-6;

/// Label from the dominant component of the slice normal (row x column).
inline Orientation classify_orientation(const std::array<double, 6>& cosines) {
  DicomSlice probe;
  probe.orientation = cosines;
  auto n = probe.normal();
  std::array<double, 3> mag{std::abs(n[0]), std::abs(n[1]), std::abs(n[2])};
  std::array<int, 3> idx{0, 1, 2};
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return mag[a] > mag[b]; });
  if (mag[idx[0]] - mag[idx[1]] <= kOrientationTieTolerance) {
    throw Error(ErrorCode::DegenerateOrientation, "slice normal has no dominant axis");
  }
  switch (idx[0]) {
    case 0: return Orientation::Sagittal;
    case 1: return Orientation::Coronal;
    default: return Orientation::Axial;
  }
}

/// Splits a series into single-orientation partitions. Partitions are
/// returned Axial, Sagittal, Coronal; each keeps the input slice order.
inline std::vector<std::pair<Orientation, DicomSeries>> split_mixed_series(const DicomSeries& series) {
  std::vector<std::pair<Orientation, DicomSeries>> out;
  for (Orientation label : {Orientation::Axial, Orientation::Sagittal, Orientation::Coronal}) {
    DicomSeries part;
    part.series_uid = series.series_uid;
    part.patient_id = series.patient_id;
    part.patient_age_years = series.patient_age_years;
    for (std::size_t i = 0; i < series.slices.size(); ++i) {
      if (classify_orientation(series.slices[i].orientation) != label) continue;
      part.slices.push_back(series.slices[i]);
      if (i < series.source_paths.size()) part.source_paths.push_back(series.source_paths[i]);
    }
    if (!part.slices.empty()) out.emplace_back(label, std::move(part));
  }
  return out;
}

namespace detail {

inline bool any_token_in(const std::vector<std::string>& tokens, const std::set<std::string>& set) {
  return std::any_of(tokens.begin(), tokens.end(), [&](const std::string& t) { return set.count(t) > 0; });
}

inline std::string upper(std::string s) {
  for (auto& ch : s) ch = char(std::toupper(static_cast<unsigned char>(ch)));
  return s;
}

}  // namespace detail

/// Ordered exclusion rules; the first rule that matches decides. Tags and
/// kernel come from the series' first slice.
inline TriageVerdict triage_series(const DicomSeries& series, Orientation orientation, std::size_t volume_slices,
                                   const TriageConfig& cfg = {}) {
  TriageVerdict v;
  v.series_uid = series.series_uid;
  v.orientation = orientation;
  std::vector<std::string> image_type;
  std::optional<std::string> kernel;
  if (!series.slices.empty()) {
    for (const auto& t : series.slices.front().image_type) image_type.push_back(detail::upper(t));
    kernel = series.slices.front().convolution_kernel;
  }
  bool blank_type = std::all_of(image_type.begin(), image_type.end(), [](const std::string& t) { return t.empty(); });

  auto exclude = [&](ExclusionReason r) {
    v.decision = Decision::Excluded;
    v.reason = r;
    return v;
  };

  if (detail::any_token_in(image_type, cfg.localiser_tokens)) return exclude(ExclusionReason::Localiser);
  if (blank_type && volume_slices < cfg.localiser_slice_threshold) return exclude(ExclusionReason::Localiser);
  bool bone_kernel = kernel && cfg.bone_tokens.count(detail::upper(*kernel)) > 0;
  if (detail::any_token_in(image_type, cfg.bone_tokens) || bone_kernel) return exclude(ExclusionReason::BoneReformat);
  if (orientation != Orientation::Axial) return exclude(ExclusionReason::NonAxial);
  if (volume_slices < cfg.split_review_threshold) {
    v.decision = Decision::NeedsReview;
    v.reason = ExclusionReason::SuspectedSplitBrain;
    return v;
  }
  return v;
}

}  // namespace ctprep
