#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "ctprep/dicom.hpp"
#include "ctprep/error.hpp"
#include "ctprep/grid.hpp"

namespace ctprep {

/// Voxel grid in Hounsfield units (or normalized intensities after
/// standardization). Spacing and origin are in millimetres and follow the
/// grid's (slice, row, col) axis order.
struct Volume {
  Grid3<float> data;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::array<double, 3> origin{0.0, 0.0, 0.0};

  Volume() = default;
  Volume(std::size_t slices, std::size_t height, std::size_t width, std::array<double, 3> spacing_mm,
         float fill = 0.0f)
      : data(slices, height, width, fill), spacing(spacing_mm) {}

  std::size_t n_slices() const noexcept { return data.slices(); }
  std::size_t height() const noexcept { return data.rows(); }
  std::size_t width() const noexcept { return data.cols(); }

  float& operator()(std::size_t s, std::size_t r, std::size_t c) noexcept { return data(s, r, c); }
  float operator()(std::size_t s, std::size_t r, std::size_t c) const noexcept { return data(s, r, c); }

  bool operator==(const Volume&) const = default;
};

/// Slice-axis layout produced by assemble() for a set of slice positions.
struct SliceAxisPlan {
  std::size_t n_out = 0;
  double spacing = 0.0;
  bool resampled = false;
};

/// Gaps differing from the smallest gap by more than this fraction trigger
/// resampling onto a uniform grid at the smallest gap.
inline constexpr double kUniformGapTolerance = 0.01;

inline SliceAxisPlan plan_slice_axis(const std::vector<double>& positions,
                                     std::optional<double> slice_thickness) {
  SliceAxisPlan plan;
  if (positions.empty()) throw Error(ErrorCode::InconsistentGeometry, "series has no slices");
  if (positions.size() == 1) {
    if (!slice_thickness || !(*slice_thickness > 0.0)) {
      throw Error(ErrorCode::SingleSliceNoSpacing, "one slice and no SliceThickness");
    }
    plan.n_out = 1;
    plan.spacing = *slice_thickness;
    return plan;
  }
  double min_gap = INFINITY;
  for (std::size_t i = 1; i < positions.size(); ++i) min_gap = std::min(min_gap, positions[i] - positions[i - 1]);
  if (!(min_gap > 0.0)) throw Error(ErrorCode::InconsistentGeometry, "duplicate slice positions");

  bool uniform = true;
  for (std::size_t i = 1; i < positions.size(); ++i) {
    double gap = positions[i] - positions[i - 1];
    if (std::abs(gap - min_gap) > kUniformGapTolerance * min_gap) uniform = false;
  }
  double extent = positions.back() - positions.front();
  if (uniform) {
    plan.n_out = positions.size();
    plan.spacing = extent / double(positions.size() - 1);
  } else {
    plan.n_out = static_cast<std::size_t>(std::floor(extent / min_gap + 1e-9)) + 1;
    plan.spacing = min_gap;
    plan.resampled = true;
  }
  return plan;
}

namespace detail {

inline std::vector<std::size_t> order_along_normal(const std::vector<DicomSlice>& slices,
                                                   std::vector<double>& positions) {
  auto normal = slices.front().normal();
  std::vector<std::size_t> order(slices.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return slices[a].position_along(normal) < slices[b].position_along(normal);
  });
  positions.clear();
  for (auto i : order) positions.push_back(slices[i].position_along(normal));
  return order;
}

}  // namespace detail

/// Number of slices the converted volume will have; used by triage before
/// any pixel work is done.
inline std::size_t assembled_slice_count(const DicomSeries& series) {
  if (series.slices.empty()) throw Error(ErrorCode::InconsistentGeometry, "series has no slices");
  std::vector<double> positions;
  detail::order_along_normal(series.slices, positions);
  return plan_slice_axis(positions, series.slices.front().slice_thickness).n_out;
}

inline float to_hu(const DicomSlice& s, std::int32_t stored) {
  return static_cast<float>(double(stored) * s.rescale_slope + s.rescale_intercept);
}

/// Stacks a series into a calibrated volume, resampling linearly along the
/// slice axis when slice gaps are not uniform.
inline Volume assemble(const DicomSeries& series) {
  if (series.slices.empty()) throw Error(ErrorCode::InconsistentGeometry, "series has no slices");
  const auto& slices = series.slices;
  std::vector<double> positions;
  auto order = detail::order_along_normal(slices, positions);
  auto plan = plan_slice_axis(positions, slices.front().slice_thickness);

  const auto& first = slices[order.front()];
  const std::size_t rows = first.rows, cols = first.cols, plane = rows * cols;
  for (const auto& s : slices) {
    if (s.rows != rows || s.cols != cols || s.raw_pixels.size() != plane) {
      throw Error(ErrorCode::InconsistentGeometry, "slice dimensions differ within series");
    }
  }

  Volume v(plan.n_out, rows, cols, {plan.spacing, first.pixel_spacing[0], first.pixel_spacing[1]});
  v.origin = first.image_position;

  if (!plan.resampled) {
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto& s = slices[order[k]];
      auto dst = v.data.slice(k);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = to_hu(s, s.raw_pixels[i]);
    }
    return v;
  }

  std::size_t lo = 0;
  for (std::size_t k = 0; k < plan.n_out; ++k) {
    double z = positions.front() + double(k) * plan.spacing;
    while (lo + 2 < positions.size() && positions[lo + 1] <= z) ++lo;
    const auto& a = slices[order[lo]];
    const auto& b = slices[order[lo + 1]];
    double t = (z - positions[lo]) / (positions[lo + 1] - positions[lo]);
    t = std::clamp(t, 0.0, 1.0);
    auto dst = v.data.slice(k);
    for (std::size_t i = 0; i < plane; ++i) {
      double ha = double(a.raw_pixels[i]) * a.rescale_slope + a.rescale_intercept;
      double hb = double(b.raw_pixels[i]) * b.rescale_slope + b.rescale_intercept;
      dst[i] = t == 0.0 ? static_cast<float>(ha)
                        : t == 1.0 ? static_cast<float>(hb) : static_cast<float>(ha + t * (hb - ha));
    }
  }
  return v;
}

}  // namespace ctprep
