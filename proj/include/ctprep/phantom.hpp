#pragma once

// Deterministic synthetic head phantoms: an egg-shaped skull shell around
// grey/white matter, lateral ventricles and a posterior fossa block. The
// shape is front/back asymmetric so a 180 degree turn is detectable.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ctprep/affine.hpp"
#include "ctprep/dicom.hpp"
#include "ctprep/dicom_writer.hpp"
#include "ctprep/error.hpp"
#include "ctprep/io.hpp"
#include "ctprep/nifti.hpp"
#include "ctprep/registration.hpp"
#include "ctprep/triage.hpp"
#include "ctprep/volume.hpp"

namespace ctprep::phantom {

enum class Tissue { Air, Skull, Cortex, White, DeepGrey, Ventricle, Fossa, Brainstem, Orbit, Sinus };
enum class Contrast { CT, MR };

/// Anatomy in millimetres about the head centre; +x left, +y posterior,
/// +z superior (DICOM patient axes).
struct HeadModel {
  double semi_x = 66.0;
  double semi_y_anterior = 75.0;
  double semi_y_posterior = 85.0;
  double semi_z = 62.0;
  double brain_fraction = 0.88;  // inner skull surface, as a fraction of the outer
  double white_fraction = 0.62;
  double ventricle_scale = 1.0;

  Tissue tissue_at(const Eigen::Vector3d& m) const {
    const double x = m.x(), y = m.y(), z = m.z();
    // Orbits and the frontal sinus sit low at the front, partly outside the vault.
    for (double side : {-1.0, 1.0}) {
      if (ball(x - side * 30.0, y + 66.0, z + 22.0, 13.0)) return Tissue::Orbit;
    }
    if (ell(x / 16.0, (y + 68.0) / 7.0, (z - 4.0) / 10.0)) return Tissue::Sinus;
    const double sy = y < 0 ? semi_y_anterior : semi_y_posterior;
    const double rho = std::sqrt(sq(x / semi_x) + sq(y / sy) + sq(z / semi_z));
    if (rho > 1.0) return Tissue::Air;
    // The skull thickens towards the occiput.
    const double inner = brain_fraction - (y > 0 ? 0.05 * y / semi_y_posterior : 0.0);
    if (rho > inner) return Tissue::Skull;
    const double vs = ventricle_scale;
    for (double side : {-1.0, 1.0}) {
      if (ell((x - side * 9.0) / (6.0 * vs), (y + 6.0) / (24.0 * vs), (z - 12.0) / (9.0 * vs))) return Tissue::Ventricle;
    }
    if (ell(x / (3.0 * vs), (y - 30.0) / (5.0 * vs), (z + 20.0) / (6.0 * vs))) return Tissue::Ventricle;
    if (std::abs(x) < 1.5 && z > 20.0 && rho > 0.3) return Tissue::Ventricle;  // interhemispheric fissure
    if (ell(x / 11.0, (y - 18.0) / 11.0, (z + 28.0) / 24.0)) return Tissue::Brainstem;
    if (ell(x / 42.0, (y - 44.0) / 24.0, (z + 34.0) / 18.0)) return Tissue::Fossa;
    for (double side : {-1.0, 1.0}) {
      if (ell((x - side * 20.0) / 9.0, (y - 4.0) / 14.0, (z + 2.0) / 9.0)) return Tissue::DeepGrey;
    }
    return rho < white_fraction * brain_fraction ? Tissue::White : Tissue::Cortex;
  }

 private:
  static double sq(double v) { return v * v; }
  static bool ell(double a, double b, double c) { return a * a + b * b + c * c <= 1.0; }
  static bool ball(double a, double b, double c, double r) { return a * a + b * b + c * c <= r * r; }
};

inline double intensity(Tissue t, Contrast c) {
  // CT in HU; MR on an arbitrary T1-like scale (bone dark, white matter bright).
  const bool ct = c == Contrast::CT;
  switch (t) {
    case Tissue::Air: return ct ? -1000.0 : 0.0;
    case Tissue::Skull: return ct ? 1000.0 : 120.0;
    case Tissue::Cortex: return ct ? 40.0 : 550.0;
    case Tissue::White: return ct ? 25.0 : 850.0;
    case Tissue::DeepGrey: return ct ? 45.0 : 620.0;
    case Tissue::Ventricle: return ct ? 5.0 : 100.0;
    case Tissue::Fossa: return ct ? 35.0 : 650.0;
    case Tissue::Brainstem: return ct ? 30.0 : 760.0;
    case Tissue::Orbit: return ct ? 12.0 : 300.0;
    case Tissue::Sinus: return ct ? -1000.0 : 0.0;
  }
  return 0.0;
}

inline HeadModel head_for(TemplateChoice age_group) {
  HeadModel m;
  if (age_group == TemplateChoice::Older) m.ventricle_scale = 1.45;
  return m;
}

/// Mean intensity over an n x n x n grid of sub-samples spanning one voxel
/// (axes given as mm step vectors). n = 1 samples the centre only.
inline double voxel_intensity(const HeadModel& model, Contrast contrast, const Eigen::Vector3d& centre,
                              const Eigen::Vector3d& ax, const Eigen::Vector3d& ay, const Eigen::Vector3d& az,
                              int n) {
  if (n <= 1) return intensity(model.tissue_at(centre), contrast);
  double acc = 0.0;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const double fi = (i + 0.5) / n - 0.5, fj = (j + 0.5) / n - 0.5, fk = (k + 0.5) / n - 0.5;
        acc += intensity(model.tissue_at(centre + fi * ax + fj * ay + fk * az), contrast);
      }
  return acc / double(n * n * n);
}

/// Template grids are cubes centred on the head.
struct TemplateGeometry {
  std::size_t size = 64;
  double spacing_mm = 3.0;
  Eigen::Vector3d center() const { return Eigen::Vector3d::Constant(double(size - 1) * spacing_mm / 2.0); }
};

inline constexpr int kDefaultSupersample = 3;

/// Renders `model` onto a grid. `template_to_grid` maps template millimetres
/// to this grid's millimetres; the head centre sits at the template centre.
inline Volume render_head(const HeadModel& model, Contrast contrast, std::array<std::size_t, 3> shape,
                          std::array<double, 3> spacing, const AffineTransform& template_to_grid,
                          const TemplateGeometry& tg = {}, int supersample = kDefaultSupersample) {
  Volume v(shape[0], shape[1], shape[2], spacing);
  const AffineTransform back = template_to_grid.inverse();
  const Eigen::Matrix3d lb = back.linear_part();
  const Eigen::Vector3d ax = lb.col(0) * spacing[2], ay = lb.col(1) * spacing[1], az = lb.col(2) * spacing[0];
  const Eigen::Vector3d center = tg.center();
  for (std::size_t s = 0; s < shape[0]; ++s)
    for (std::size_t r = 0; r < shape[1]; ++r)
      for (std::size_t c = 0; c < shape[2]; ++c) {
        Eigen::Vector3d q(double(c) * spacing[2], double(r) * spacing[1], double(s) * spacing[0]);
        v(s, r, c) = float(voxel_intensity(model, contrast, back.apply(q) - center, ax, ay, az, supersample));
      }
  return v;
}

inline Volume make_template(TemplateChoice which, const TemplateGeometry& tg = {}) {
  const double sp = tg.spacing_mm;
  return render_head(head_for(which), Contrast::MR, {tg.size, tg.size, tg.size}, {sp, sp, sp}, AffineTransform{}, tg);
}

struct TemplatePaths {
  std::filesystem::path younger;
  std::filesystem::path older;
};

inline TemplatePaths template_paths(const std::filesystem::path& dir) {
  return {dir / "template_younger.nii", dir / "template_older.nii"};
}

inline TemplatePaths generate_templates(const std::filesystem::path& out_dir) {
  auto paths = template_paths(out_dir);
  write_nifti(make_template(TemplateChoice::Younger), paths.younger);
  write_nifti(make_template(TemplateChoice::Older), paths.older);
  return paths;
}

inline TemplateBank load_templates(const std::filesystem::path& dir) {
  auto paths = template_paths(dir);
  TemplateBank bank;
  bank.younger = read_nifti(paths.younger);
  bank.older = read_nifti(paths.older);
  return bank;
}

enum class Category {
  AxialSoft,
  AxialBone,
  Localiser,
  SplitBase,
  SplitVault,
  Sagittal,
  Coronal,
  MixedOrientation,
  TiltedAxial,
  FlippedAxial,
};

inline constexpr std::array kAllCategories{Category::AxialSoft,  Category::AxialBone,   Category::Localiser,
                                           Category::SplitBase,  Category::SplitVault,  Category::Sagittal,
                                           Category::Coronal,    Category::MixedOrientation, Category::TiltedAxial,
                                           Category::FlippedAxial};

constexpr std::string_view to_string(Category c) {
  switch (c) {
    case Category::AxialSoft: return "AxialSoft";
    case Category::AxialBone: return "AxialBone";
    case Category::Localiser: return "Localiser";
    case Category::SplitBase: return "SplitBase";
    case Category::SplitVault: return "SplitVault";
    case Category::Sagittal: return "Sagittal";
    case Category::Coronal: return "Coronal";
    case Category::MixedOrientation: return "MixedOrientation";
    case Category::TiltedAxial: return "TiltedAxial";
    case Category::FlippedAxial: return "FlippedAxial";
  }
  return "?";
}

inline Category parse_category(std::string_view s) {
  for (auto c : kAllCategories) {
    if (to_string(c) == s) return c;
  }
  throw Error(ErrorCode::ConfigError, "unknown phantom category '" + std::string(s) + "'");
}

struct PhantomSpec {
  std::uint64_t seed = 1;
  Category category = Category::AxialSoft;
  std::size_t n_slices = 40;
  std::size_t rows = 128;
  std::size_t cols = 128;
  double pixel_spacing_mm = 1.6;
  double slice_spacing_mm = 4.0;
  double tilt_deg = 20.0;  // TiltedAxial only
  std::optional<int> age_years;
  bool age_in_tag = true;
  /// Localiser variant: blank ImageType and two slices instead of a tagged single slice.
  bool blank_image_type = false;
  /// Drop one interior slice so the series has a non-uniform gap.
  bool irregular_spacing = false;
  bool explicit_vr = true;
  double noise_sigma_hu = 0.0;
  /// Sub-samples per voxel axis when rendering (partial-volume averaging).
  int supersample = kDefaultSupersample;
  /// Head pose in patient space; identity when absent apart from the
  /// category's own turn (FlippedAxial).
  std::optional<AffineTransform> pose;
};

/// What the pipeline should conclude about one orientation partition.
struct ExpectedOutcome {
  Orientation orientation = Orientation::Axial;
  Decision decision = Decision::Accepted;
  ExclusionReason reason = ExclusionReason::None;
  /// Final report bucket: Accepted, NonAxial, Localiser, BoneReformat,
  /// SeparatedSkullBaseVault or PoorPositioning.
  std::string final_outcome;
};

struct GroundTruth {
  std::string series_uid;
  std::string patient_id;
  Category category = Category::AxialSoft;
  std::optional<int> age_years;
  bool age_in_tag = true;
  std::optional<AffineTransform> true_transform;
  std::vector<ExpectedOutcome> expected;
  std::vector<std::filesystem::path> files;
};

inline std::vector<ExpectedOutcome> expected_outcomes(Category c) {
  using O = Orientation;
  using D = Decision;
  using R = ExclusionReason;
  switch (c) {
    case Category::AxialSoft:
    case Category::TiltedAxial: return {{O::Axial, D::Accepted, R::None, "Accepted"}};
    case Category::FlippedAxial: return {{O::Axial, D::Accepted, R::None, "PoorPositioning"}};
    case Category::AxialBone: return {{O::Axial, D::Excluded, R::BoneReformat, "BoneReformat"}};
    case Category::Localiser: return {{O::Coronal, D::Excluded, R::Localiser, "Localiser"}};
    case Category::SplitBase:
    case Category::SplitVault: return {{O::Axial, D::NeedsReview, R::SuspectedSplitBrain, "SeparatedSkullBaseVault"}};
    case Category::Sagittal: return {{O::Sagittal, D::Excluded, R::NonAxial, "NonAxial"}};
    case Category::Coronal: return {{O::Coronal, D::Excluded, R::NonAxial, "NonAxial"}};
    case Category::MixedOrientation:
      return {{O::Axial, D::Accepted, R::None, "Accepted"}, {O::Sagittal, D::Excluded, R::NonAxial, "NonAxial"}};
  }
  return {};
}

namespace detail {

inline std::string uid_for(std::uint64_t seed, int suffix) {
  return "1.2.826.0.1.3680043.10.999." + std::to_string(seed) + "." + std::to_string(suffix);
}

struct SliceGeometry {
  Eigen::Vector3d row_dir;
  Eigen::Vector3d col_dir;
  Eigen::Vector3d position;
};

inline Eigen::Matrix3d frame_of(const Eigen::Vector3d& row_dir, const Eigen::Vector3d& col_dir) {
  Eigen::Matrix3d m;
  m.col(0) = row_dir;
  m.col(1) = col_dir;
  m.col(2) = row_dir.cross(col_dir);
  return m;
}

inline std::array<double, 6> quantized_cosines(const Eigen::Vector3d& r, const Eigen::Vector3d& c) {
  return {quantize_ds(r.x()), quantize_ds(r.y()), quantize_ds(r.z()),
          quantize_ds(c.x()), quantize_ds(c.y()), quantize_ds(c.z())};
}

/// A stack of parallel slices centred on the patient origin. `first` and
/// `count` select a window of a virtual stack of `total` slices.
inline std::vector<SliceGeometry> stack_geometry(const Eigen::Vector3d& row_dir, const Eigen::Vector3d& col_dir,
                                                 std::size_t rows, std::size_t cols, double pixel_mm,
                                                 double slice_mm, std::size_t total, std::size_t first,
                                                 std::size_t count) {
  Eigen::Vector3d normal = row_dir.cross(col_dir);
  Eigen::Vector3d corner = -(double(cols - 1) / 2.0 * pixel_mm * row_dir + double(rows - 1) / 2.0 * pixel_mm * col_dir +
                             double(total - 1) / 2.0 * slice_mm * normal);
  std::vector<SliceGeometry> out;
  for (std::size_t k = first; k < first + count; ++k) {
    out.push_back({row_dir, col_dir, corner + double(k) * slice_mm * normal});
  }
  return out;
}

}  // namespace detail

/// Pose from the seed: small rotations, translations and head-size changes.
inline AffineTransform default_pose(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 7919u + 17u);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::Matrix3d rot = rotation_xyz_deg(3.0 * u(rng), 3.0 * u(rng), 4.0 * u(rng));
  double size = 1.0 + 0.04 * u(rng);
  Eigen::Vector3d t(5.0 * u(rng), 5.0 * u(rng), 4.0 * u(rng));
  return AffineTransform::from_parts(rot * size, t);
}

/// Writes one phantom series as DICOM files under `out_dir` and returns its
/// ground truth.
inline GroundTruth generate_scan(const PhantomSpec& spec, const std::filesystem::path& out_dir) {
  if (spec.rows < 64 || spec.cols < 64) throw Error(ErrorCode::ConfigError, "phantom needs at least 64x64 pixels");
  if (spec.n_slices < 1) throw Error(ErrorCode::ConfigError, "phantom needs at least one slice");

  GroundTruth gt;
  gt.series_uid = detail::uid_for(spec.seed, 1);
  gt.patient_id = "PHANTOM" + std::to_string(spec.seed);
  gt.category = spec.category;
  gt.age_years = spec.age_years;
  gt.age_in_tag = spec.age_in_tag;
  gt.expected = expected_outcomes(spec.category);

  AffineTransform pose = spec.pose.value_or(default_pose(spec.seed));
  if (spec.category == Category::FlippedAxial) {
    pose = AffineTransform::from_parts(rotation_xyz_deg(0, 0, 180.0), Eigen::Vector3d::Zero()).then(pose);
  }
  const HeadModel model = head_for(!spec.age_years || *spec.age_years > 72 ? TemplateChoice::Older : TemplateChoice::Younger);
  const double px = quantize_ds(spec.pixel_spacing_mm);
  const double thickness = quantize_ds(spec.slice_spacing_mm);

  const Eigen::Vector3d ex = Eigen::Vector3d::UnitX(), ey = Eigen::Vector3d::UnitY(), ez = Eigen::Vector3d::UnitZ();
  std::vector<detail::SliceGeometry> geometry;
  std::vector<std::string> image_type{"ORIGINAL", "PRIMARY", "AXIAL"};
  std::optional<std::string> kernel = std::string(std::array{"H30s", "STANDARD", "FC21"}[spec.seed % 3]);
  const std::size_t n = spec.n_slices;

  switch (spec.category) {
    case Category::AxialSoft:
    case Category::FlippedAxial:
      geometry = detail::stack_geometry(ex, ey, spec.rows, spec.cols, px, thickness, n, 0, n);
      break;
    case Category::AxialBone:
      geometry = detail::stack_geometry(ex, ey, spec.rows, spec.cols, px, thickness, n, 0, n);
      if (spec.seed % 2 == 0) {
        kernel = std::string(spec.seed % 4 == 0 ? "BONE" : "H70h");
      } else {
        image_type.push_back("BONE");
      }
      break;
    case Category::TiltedAxial: {
      Eigen::Matrix3d tilt = rotation_xyz_deg(spec.tilt_deg, 0, 0);
      geometry = detail::stack_geometry(ex, tilt * ey, spec.rows, spec.cols, px, thickness, n, 0, n);
      break;
    }
    case Category::SplitBase:
    case Category::SplitVault: {
      // Two abutting blocks of a 2n-slice stack; the base uses thicker slices.
      double mm = spec.category == Category::SplitBase ? thickness : quantize_ds(thickness * 0.75);
      std::size_t first = spec.category == Category::SplitBase ? 0 : n;
      auto full = detail::stack_geometry(ex, ey, spec.rows, spec.cols, px, mm, 2 * n, first, n);
      Eigen::Vector3d shift = spec.category == Category::SplitBase ? Eigen::Vector3d(0, 0, -0.25 * thickness * double(n))
                                                                   : Eigen::Vector3d(0, 0, 0.25 * mm * double(n));
      for (auto& g : full) g.position += shift;
      geometry = full;
      break;
    }
    case Category::Sagittal:
      image_type = {"DERIVED", "SECONDARY", "REFORMATTED"};
      geometry = detail::stack_geometry(ey, -ez, spec.rows, spec.cols, px, thickness, n, 0, n);
      break;
    case Category::Coronal:
      image_type = {"DERIVED", "SECONDARY", "REFORMATTED"};
      geometry = detail::stack_geometry(ex, -ez, spec.rows, spec.cols, px, thickness, n, 0, n);
      break;
    case Category::Localiser: {
      std::size_t count = spec.blank_image_type ? 2 : 1;
      image_type = spec.blank_image_type ? std::vector<std::string>{} : std::vector<std::string>{"ORIGINAL", "PRIMARY", "LOCALIZER"};
      kernel.reset();
      geometry = detail::stack_geometry(ex, -ez, spec.rows, spec.cols, px * 2.0, thickness, count, 0, count);
      break;
    }
    case Category::MixedOrientation: {
      geometry = detail::stack_geometry(ex, ey, spec.rows, spec.cols, px, thickness, n, 0, n);
      auto sag = detail::stack_geometry(ey, -ez, spec.rows, spec.cols, px, thickness, 1, 0, 1);
      geometry.push_back(sag.front());
      break;
    }
  }
  if (spec.irregular_spacing && geometry.size() > 4 && spec.category != Category::MixedOrientation) {
    geometry.erase(geometry.begin() + std::ptrdiff_t(geometry.size() / 2));
  }

  // Ground-truth transform (template mm -> assembled volume mm) for axial stacks.
  const bool axial_stack = spec.category == Category::AxialSoft || spec.category == Category::FlippedAxial ||
                           spec.category == Category::TiltedAxial || spec.category == Category::MixedOrientation ||
                           spec.category == Category::AxialBone;
  if (axial_stack) {
    const auto& g0 = geometry.front();
    Eigen::Matrix3d frame = detail::frame_of(g0.row_dir, g0.col_dir);
    Eigen::Vector3d pos0(quantize_ds(g0.position.x()), quantize_ds(g0.position.y()), quantize_ds(g0.position.z()));
    AffineTransform to_model = AffineTransform::from_parts(Eigen::Matrix3d::Identity(), -TemplateGeometry{}.center());
    AffineTransform to_scan = AffineTransform::from_parts(frame.transpose(), -frame.transpose() * pos0);
    gt.true_transform = to_model.then(pose).then(to_scan);
  }

  std::mt19937_64 noise_rng(spec.seed ^ 0x9E3779B97F4A7C15ull);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma_hu > 0 ? spec.noise_sigma_hu : 1.0);
  const AffineTransform inverse_pose = pose.inverse();
  const bool signed_pixels = spec.seed % 2 == 1;
  const double intercept = signed_pixels ? 0.0 : -1024.0;

  std::filesystem::path series_dir = out_dir / ("series_" + std::to_string(spec.seed));
  std::filesystem::create_directories(series_dir);
  for (std::size_t k = 0; k < geometry.size(); ++k) {
    const auto& g = geometry[k];
    const double pixel_mm = spec.category == Category::Localiser ? px * 2.0 : px;
    DicomSlice s;
    s.rows = std::uint32_t(spec.rows);
    s.cols = std::uint32_t(spec.cols);
    s.pixel_spacing = {quantize_ds(pixel_mm), quantize_ds(pixel_mm)};
    s.image_position = {quantize_ds(g.position.x()), quantize_ds(g.position.y()), quantize_ds(g.position.z())};
    s.orientation = detail::quantized_cosines(g.row_dir, g.col_dir);
    s.image_type = image_type;
    s.convolution_kernel = kernel;
    s.rescale_slope = 1.0;
    s.rescale_intercept = intercept;
    s.series_uid = gt.series_uid;
    s.patient_id = gt.patient_id;
    if (spec.age_in_tag) s.patient_age_years = spec.age_years;
    s.instance_number = int(k + 1);
    s.slice_thickness = spec.category == Category::SplitVault ? quantize_ds(thickness * 0.75) : thickness;
    s.pixels_signed = signed_pixels;
    s.raw_pixels.resize(spec.rows * spec.cols);

    Eigen::Vector3d origin(s.image_position[0], s.image_position[1], s.image_position[2]);
    const Eigen::Matrix3d back = inverse_pose.linear_part();
    const Eigen::Vector3d ax = back * g.row_dir * pixel_mm, ay = back * g.col_dir * pixel_mm,
                          az = back * g.row_dir.cross(g.col_dir) * s.slice_thickness.value_or(thickness);
    for (std::size_t r = 0; r < spec.rows; ++r) {
      for (std::size_t c = 0; c < spec.cols; ++c) {
        Eigen::Vector3d patient = origin + double(c) * pixel_mm * g.row_dir + double(r) * pixel_mm * g.col_dir;
        double hu = voxel_intensity(model, Contrast::CT, inverse_pose.apply(patient), ax, ay, az, spec.supersample);
        if (spec.noise_sigma_hu > 0) hu += noise(noise_rng);
        // Clipped like a scanner would; noisy air can dip under the intercept.
        long raw = std::lround(hu - intercept);
        s.raw_pixels[r * spec.cols + c] =
            std::int32_t(signed_pixels ? std::clamp(raw, -32768L, 32767L) : std::clamp(raw, 0L, 65535L));
      }
    }
    WriteOptions opt;
    opt.explicit_vr = spec.explicit_vr;
    opt.sop_instance_uid = gt.series_uid + "." + std::to_string(k + 1);
    char name[32];
    std::snprintf(name, sizeof name, "IM%04zu.dcm", k + 1);
    write_dicom(s, series_dir / name, opt);
    gt.files.push_back(series_dir / name);
  }
  return gt;
}

inline nlohmann::json to_json(const GroundTruth& gt) {
  nlohmann::json j;
  j["series_uid"] = gt.series_uid;
  j["patient_id"] = gt.patient_id;
  j["category"] = std::string(to_string(gt.category));
  if (gt.age_years) j["age"] = *gt.age_years;
  if (gt.true_transform) {
    std::vector<double> m;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) m.push_back(gt.true_transform->matrix()(r, c));
    j["true_transform"] = m;
  }
  nlohmann::json expected = nlohmann::json::array();
  for (const auto& e : gt.expected) {
    expected.push_back({{"orientation", std::string(to_string(e.orientation))},
                        {"decision", std::string(to_string(e.decision))},
                        {"reason", std::string(to_string(e.reason))},
                        {"final", e.final_outcome}});
  }
  j["expected"] = expected;
  return j;
}

inline GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  GroundTruth gt;
  gt.series_uid = j.at("series_uid").get<std::string>();
  gt.patient_id = j.value("patient_id", "");
  gt.category = parse_category(j.at("category").get<std::string>());
  if (j.contains("age")) gt.age_years = j.at("age").get<int>();
  if (j.contains("true_transform")) {
    auto v = j.at("true_transform").get<std::vector<double>>();
    Eigen::Matrix4d m;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = v.at(std::size_t(r * 4 + c));
    gt.true_transform = AffineTransform(m);
  }
  for (const auto& e : j.at("expected")) {
    gt.expected.push_back({parse_orientation(e.at("orientation").get<std::string>()),
                           parse_decision(e.at("decision").get<std::string>()),
                           parse_reason(e.at("reason").get<std::string>()), e.at("final").get<std::string>()});
  }
  return gt;
}

inline std::vector<GroundTruth> read_labels(const std::filesystem::path& path) {
  std::vector<GroundTruth> out;
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    out.push_back(ground_truth_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

struct CorpusSpec {
  std::uint64_t seed = 1;
  /// (category, how many) in generation order.
  std::vector<std::pair<Category, std::size_t>> counts;
  std::size_t rows = 128;
  std::size_t cols = 128;
  std::size_t n_slices = 40;
  std::size_t split_slices = 12;
  double noise_sigma_hu = 0.0;
};

/// Equal count of every category.
inline CorpusSpec balanced_corpus(std::size_t per_category, std::uint64_t seed = 1) {
  CorpusSpec spec;
  spec.seed = seed;
  for (auto c : kAllCategories) spec.counts.emplace_back(c, per_category);
  return spec;
}

/// 3 non-axial, 2 localisers, 2 bone, 3 split, 2 flipped, 8 clean.
inline CorpusSpec small_mixed_corpus(std::uint64_t seed = 1) {
  CorpusSpec spec;
  spec.seed = seed;
  spec.counts = {{Category::AxialSoft, 6},  {Category::TiltedAxial, 2}, {Category::Sagittal, 2},
                 {Category::Coronal, 1},    {Category::Localiser, 2},   {Category::AxialBone, 2},
                 {Category::SplitBase, 2},  {Category::SplitVault, 1},  {Category::FlippedAxial, 2}};
  return spec;
}

inline constexpr const char* kLabelsFile = "labels.jsonl";
inline constexpr const char* kAgeSidecarFile = "series_ages.txt";

/// Generates a corpus under `out_dir` with a labels file and an age sidecar
/// for the series whose age is not carried in the DICOM tag.
inline std::vector<GroundTruth> generate_corpus(const CorpusSpec& corpus, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<GroundTruth> truths;
  std::uint64_t index = 0;
  std::string labels, sidecar;
  for (const auto& [category, count] : corpus.counts) {
    for (std::size_t i = 0; i < count; ++i, ++index) {
      PhantomSpec spec;
      spec.seed = corpus.seed * 1000 + index;
      spec.category = category;
      spec.rows = corpus.rows;
      spec.cols = corpus.cols;
      spec.noise_sigma_hu = corpus.noise_sigma_hu;
      spec.n_slices = category == Category::SplitBase || category == Category::SplitVault ? corpus.split_slices
                      : category == Category::MixedOrientation                             ? 30
                                                                                           : corpus.n_slices + (index % 5);
      spec.age_years = 60 + int((index * 7) % 26);
      if (index % 6 == 5) spec.age_years.reset();
      spec.age_in_tag = index % 3 != 2;
      spec.blank_image_type = category == Category::Localiser && i % 2 == 1;
      spec.irregular_spacing = category == Category::AxialSoft && i % 3 == 2;
      spec.explicit_vr = index % 4 != 3;
      spec.tilt_deg = 12.0 + double(i % 3) * 4.0;
      auto gt = generate_scan(spec, out_dir);
      labels += to_json(gt).dump() + "\n";
      if (gt.age_years && !gt.age_in_tag) sidecar += gt.series_uid + ", " + std::to_string(*gt.age_years) + "\n";
      truths.push_back(std::move(gt));
    }
  }
  io::write_text_atomic(out_dir / kLabelsFile, labels);
  io::write_text_atomic(out_dir / kAgeSidecarFile, sidecar);
  return truths;
}

/// HU volume with an axis-aligned elliptic skull shell whose outer boundary
/// touches rows center_row +/- semi_rows and cols center_col +/- semi_cols
/// exactly (integer semi-axes). Only slices in [first_head_slice,
/// last_head_slice] contain the head.
struct EllipseHeadSpec {
  std::size_t n_slices = 4;
  std::size_t rows = 512;
  std::size_t cols = 512;
  std::size_t center_row = 250;
  std::size_t center_col = 250;
  std::size_t semi_rows = 200;
  std::size_t semi_cols = 150;
  double shell_fraction = 0.9;
  std::size_t first_head_slice = 0;
  std::size_t last_head_slice = SIZE_MAX;
};

inline Volume ellipse_head_volume(const EllipseHeadSpec& e) {
  Volume v(e.n_slices, e.rows, e.cols, {5.0, 0.5, 0.5}, -1000.0f);
  for (std::size_t s = 0; s < e.n_slices; ++s) {
    if (s < e.first_head_slice || s > e.last_head_slice) continue;
    for (std::size_t r = 0; r < e.rows; ++r)
      for (std::size_t c = 0; c < e.cols; ++c) {
        double dr = (double(r) - double(e.center_row)) / double(e.semi_rows);
        double dc = (double(c) - double(e.center_col)) / double(e.semi_cols);
        double rho2 = dr * dr + dc * dc;
        if (rho2 > 1.0) continue;
        v(s, r, c) = rho2 >= e.shell_fraction * e.shell_fraction ? 1000.0f : 30.0f;
      }
  }
  return v;
}

}  // namespace ctprep::phantom
