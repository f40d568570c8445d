#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <tuple>

#include "ctprep/error.hpp"
#include "ctprep/volume.hpp"

namespace ctprep {

/// Inclusive in-plane bounding box shared by every slice.
struct CropBox {
  std::size_t row_min = 0;
  std::size_t row_max = 0;
  std::size_t col_min = 0;
  std::size_t col_max = 0;

  std::size_t height() const noexcept { return row_max - row_min + 1; }
  std::size_t width() const noexcept { return col_max - col_min + 1; }
  bool operator==(const CropBox&) const = default;
};

struct StandardizeConfig {
  double bone_threshold_hu = 300.0;
  std::size_t crop_margin = 5;
  std::size_t target_height = 500;
  std::size_t target_width = 400;
  double hu_window_min = 0.0;
  double hu_window_max = 100.0;
};

/// Box around every voxel at or above the bone threshold, taken over all
/// slices at once, grown by `margin` and clamped to the image.
inline CropBox find_head_box(const Volume& v, double bone_threshold_hu = 300.0, std::size_t margin = 5) {
  std::size_t rmin = SIZE_MAX, rmax = 0, cmin = SIZE_MAX, cmax = 0;
  bool found = false;
  for (std::size_t s = 0; s < v.n_slices(); ++s) {
    for (std::size_t r = 0; r < v.height(); ++r) {
      for (std::size_t c = 0; c < v.width(); ++c) {
        if (double(v(s, r, c)) < bone_threshold_hu) continue;
        found = true;
        rmin = std::min(rmin, r);
        rmax = std::max(rmax, r);
        cmin = std::min(cmin, c);
        cmax = std::max(cmax, c);
      }
    }
  }
  if (!found) throw Error(ErrorCode::NoHeadFound, "no voxel reaches the bone threshold");
  CropBox box;
  box.row_min = rmin > margin ? rmin - margin : 0;
  box.col_min = cmin > margin ? cmin - margin : 0;
  box.row_max = std::min(rmax + margin, v.height() - 1);
  box.col_max = std::min(cmax + margin, v.width() - 1);
  return box;
}

inline Volume crop(const Volume& v, const CropBox& box) {
  if (box.row_min > box.row_max || box.col_min > box.col_max || box.row_max >= v.height() ||
      box.col_max >= v.width()) {
    throw Error(ErrorCode::InconsistentGeometry, "crop box outside the volume");
  }
  Volume out(v.n_slices(), box.height(), box.width(), v.spacing);
  out.origin = v.origin;
  for (std::size_t s = 0; s < v.n_slices(); ++s) {
    for (std::size_t r = 0; r < box.height(); ++r) {
      const float* src = &v.data(s, box.row_min + r, box.col_min);
      std::copy(src, src + box.width(), &out.data(s, r, 0));
    }
  }
  return out;
}

/// Zero-pads (centred, odd remainder on the bottom/right) when the slice
/// fits in the target, otherwise resamples bilinearly to exactly the target.
/// Either way the in-plane size becomes target_height x target_width.
inline Volume pad_or_resize(const Volume& v, std::size_t target_height = 500, std::size_t target_width = 400) {
  const std::size_t h = v.height(), w = v.width();
  Volume out(v.n_slices(), target_height, target_width, v.spacing, 0.0f);
  out.origin = v.origin;

  if (h <= target_height && w <= target_width) {
    const std::size_t top = (target_height - h) / 2, left = (target_width - w) / 2;
    for (std::size_t s = 0; s < v.n_slices(); ++s) {
      for (std::size_t r = 0; r < h; ++r) {
        const float* src = &v.data(s, r, 0);
        std::copy(src, src + w, &out.data(s, top + r, left));
      }
    }
    return out;
  }

  // Half-pixel-centre convention (align_corners = false).
  const double sy = double(h) / double(target_height), sx = double(w) / double(target_width);
  out.spacing = {v.spacing[0], v.spacing[1] * sy, v.spacing[2] * sx};
  auto source_coord = [](std::size_t dst, double scale, std::size_t n) {
    double x = (double(dst) + 0.5) * scale - 0.5;
    x = std::clamp(x, 0.0, double(n - 1));
    auto i0 = static_cast<std::size_t>(std::floor(x));
    std::size_t i1 = std::min(i0 + 1, n - 1);
    return std::make_tuple(i0, i1, x - double(i0));
  };
  for (std::size_t s = 0; s < v.n_slices(); ++s) {
    for (std::size_t r = 0; r < target_height; ++r) {
      auto [r0, r1, fr] = source_coord(r, sy, h);
      for (std::size_t c = 0; c < target_width; ++c) {
        auto [c0, c1, fc] = source_coord(c, sx, w);
        double top = double(v(s, r0, c0)) * (1 - fc) + double(v(s, r0, c1)) * fc;
        double bottom = double(v(s, r1, c0)) * (1 - fc) + double(v(s, r1, c1)) * fc;
        out(s, r, c) = static_cast<float>(top * (1 - fr) + bottom * fr);
      }
    }
  }
  return out;
}

/// Clamp to [lo, hi] HU then divide by the window width.
inline double window_scale_value(double hu, double lo = 0.0, double hi = 100.0) {
  return (std::clamp(hu, lo, hi) - lo) / (hi - lo);
}

inline Volume window_scale(const Volume& v, double lo = 0.0, double hi = 100.0) {
  Volume out = v;
  for (auto& x : out.data.data()) x = static_cast<float>(window_scale_value(double(x), lo, hi));
  return out;
}

/// crop -> pad/resize -> window.
inline Volume standardize(const Volume& v, const StandardizeConfig& cfg = {}) {
  auto box = find_head_box(v, cfg.bone_threshold_hu, cfg.crop_margin);
  auto sized = pad_or_resize(crop(v, box), cfg.target_height, cfg.target_width);
  return window_scale(sized, cfg.hu_window_min, cfg.hu_window_max);
}

}  // namespace ctprep
