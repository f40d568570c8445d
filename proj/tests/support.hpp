#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "ctprep/ctprep.hpp"

namespace ctprep::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "ctprep") {
    std::string pattern = (std::filesystem::temp_directory_path() / (tag + "-XXXXXX")).string();
    if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

/// Random slice whose decimal fields survive a DS write unchanged.
inline DicomSlice random_slice(std::mt19937_64& rng) {
  using phantom::quantize_ds;
  DicomSlice s;
  s.rows = std::uint32_t(uniform_int(rng, 1, 24));
  s.cols = std::uint32_t(uniform_int(rng, 1, 24));
  s.pixel_spacing = {quantize_ds(uniform(rng, 0.2, 2.0)), quantize_ds(uniform(rng, 0.2, 2.0))};
  for (auto& p : s.image_position) p = quantize_ds(uniform(rng, -300, 300));
  double a = uniform(rng, -0.5, 0.5);
  s.orientation = {quantize_ds(std::cos(a)), quantize_ds(std::sin(a)), 0.0, quantize_ds(-std::sin(a)),
                   quantize_ds(std::cos(a)), 0.0};
  s.image_type = {"ORIGINAL", "PRIMARY", uniform_int(rng, 0, 3) == 0 ? "LOCALIZER" : "AXIAL"};
  if (uniform_int(rng, 0, 1)) s.convolution_kernel = uniform_int(rng, 0, 1) ? "H30s" : "BONE";
  s.rescale_slope = quantize_ds(uniform_int(rng, 0, 2) ? 1.0 : uniform(rng, 0.5, 2.0));
  s.rescale_intercept = quantize_ds(double(uniform_int(rng, -1024, 0)));
  s.pixels_signed = uniform_int(rng, 0, 1) == 1;
  s.raw_pixels.resize(std::size_t(s.rows) * s.cols);
  for (auto& v : s.raw_pixels) v = s.pixels_signed ? uniform_int(rng, -32768, 32767) : uniform_int(rng, 0, 65535);
  s.series_uid = "1.2.3." + std::to_string(uniform_int(rng, 1, 99999));
  s.patient_id = "P" + std::to_string(uniform_int(rng, 1, 999));
  if (uniform_int(rng, 0, 1)) s.patient_age_years = uniform_int(rng, 18, 109);
  if (uniform_int(rng, 0, 1)) s.instance_number = uniform_int(rng, 1, 500);
  if (uniform_int(rng, 0, 1)) s.slice_thickness = quantize_ds(uniform(rng, 0.5, 10.0));
  return s;
}

inline Volume random_volume(std::mt19937_64& rng, std::size_t max_dim = 24) {
  Volume v(std::size_t(uniform_int(rng, 1, int(max_dim))), std::size_t(uniform_int(rng, 1, int(max_dim))),
           std::size_t(uniform_int(rng, 1, int(max_dim))),
           {uniform(rng, 0.5, 6.0), uniform(rng, 0.3, 2.0), uniform(rng, 0.3, 2.0)});
  v.origin = {uniform(rng, -200, 200), uniform(rng, -200, 200), uniform(rng, -200, 200)};
  for (auto& x : v.data.data()) x = float(uniform(rng, -1024.0, 3071.0));
  return v;
}

struct RegistrationCase {
  AffineTransform truth;  // template mm -> target mm
  double angle_deg = 0.0;
  double shift_voxels = 0.0;
};

/// Random affine about the template centre: rotation up to `max_deg` about a
/// random axis, per-axis scale in [0.9, 1.1], shift up to `max_shift`
/// voxels in a random direction.
inline RegistrationCase random_registration_case(std::mt19937_64& rng, double max_deg = 20.0,
                                                 double max_shift = 20.0) {
  const phantom::TemplateGeometry tg;
  auto u = [&] { return uniform(rng, -1.0, 1.0); };
  Eigen::Vector3d axis(u(), u(), u());
  axis.normalize();
  RegistrationCase out;
  out.angle_deg = max_deg * std::abs(u());
  Eigen::Matrix3d rot = Eigen::AngleAxisd(out.angle_deg * M_PI / 180.0, axis).toRotationMatrix();
  Eigen::Vector3d scale(1 + 0.1 * u(), 1 + 0.1 * u(), 1 + 0.1 * u());
  Eigen::Vector3d dir(u(), u(), u());
  dir.normalize();
  out.shift_voxels = max_shift * std::abs(u());
  Eigen::Matrix3d linear = rot * scale.asDiagonal();
  Eigen::Vector3d c = tg.center();
  out.truth = AffineTransform::from_parts(linear, c + dir * out.shift_voxels * tg.spacing_mm - linear * c);
  return out;
}

/// CT-contrast phantom on the template grid, posed by `truth`.
inline Volume render_target(const AffineTransform& truth, TemplateChoice head = TemplateChoice::Younger) {
  const phantom::TemplateGeometry tg;
  return phantom::render_head(phantom::head_for(head), phantom::Contrast::CT, {tg.size, tg.size, tg.size},
                              {tg.spacing_mm, tg.spacing_mm, tg.spacing_mm}, truth, tg);
}

struct TransformError {
  Eigen::Vector3d shift_voxels;  // displacement difference at the template centre
  double rotation_deg = 0.0;     // angle of the residual rotation
  bool within(double voxels, double degrees) const {
    return shift_voxels.cwiseAbs().maxCoeff() <= voxels && rotation_deg <= degrees;
  }
};

inline TransformError compare_transforms(const AffineTransform& found, const AffineTransform& truth) {
  const phantom::TemplateGeometry tg;
  const Eigen::Vector3d c = tg.center();
  TransformError e;
  e.shift_voxels = (found.apply(c) - truth.apply(c)) / tg.spacing_mm;
  e.rotation_deg = rotation_angle_deg(found.linear_part() * truth.linear_part().inverse());
  return e;
}

/// Writes `text` as a config file for a run over `in` into `out`.
inline std::filesystem::path write_config(const std::filesystem::path& cfg_path, const std::filesystem::path& in,
                                          const std::filesystem::path& out, const std::string& extra = {}) {
  io::write_text_atomic(cfg_path, "input_dir = " + in.string() + "\noutput_dir = " + out.string() + "\n" + extra);
  return cfg_path;
}

}  // namespace ctprep::testing
