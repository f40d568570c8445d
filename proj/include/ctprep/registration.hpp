#pragma once

// Template-to-scan affine registration: mutual information over a joint
// intensity histogram, coarse-to-fine, with golden-section coordinate
// ascent on a 12-parameter affine.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctprep/affine.hpp"
#include "ctprep/error.hpp"
#include "ctprep/grid.hpp"
#include "ctprep/volume.hpp"

namespace ctprep {

enum class TemplateChoice { Younger, Older };

constexpr std::string_view to_string(TemplateChoice t) {
  return t == TemplateChoice::Younger ? "younger" : "older";
}

struct TemplateBank {
  Volume younger;
  Volume older;
  TemplateChoice default_when_age_missing = TemplateChoice::Older;
  int age_cutoff = 72;  // ages up to and including the cutoff use the younger template
};

inline TemplateChoice choose_template(std::optional<int> age_years, const TemplateBank& bank) {
  if (!age_years) return bank.default_when_age_missing;
  return *age_years <= bank.age_cutoff ? TemplateChoice::Younger : TemplateChoice::Older;
}

inline const Volume& select_template(std::optional<int> age_years, const TemplateBank& bank) {
  return choose_template(age_years, bank) == TemplateChoice::Younger ? bank.younger : bank.older;
}

struct RegistrationConfig {
  int histogram_bins = 64;
  std::vector<int> pyramid{4, 2, 1};
  int max_sweeps = 5;
  int golden_iterations = 10;
  /// Both images are box-averaged until no axis exceeds this many voxels
  /// before the pyramid is built.
  std::size_t max_working_dim = 64;
  /// Coarse multi-start: rotations of -g, 0, +g degrees about each axis
  /// (0 disables), each also tried turned 180 degrees in-plane when
  /// flip_search is set.
  double start_grid_deg = 20.0;
  bool flip_search = true;
  /// Candidates carried from the coarsest level, and from the middle level.
  std::size_t keep_after_coarse = 2;
  std::size_t keep_after_middle = 1;
  /// Final similarity below this floor is reported as NonConvergence.
  double min_similarity = 0.0;
  double sweep_tolerance = 1e-5;
  double ct_window_min = 0.0;
  double ct_window_max = 100.0;
};

struct RegistrationResult {
  AffineTransform transform;
  Volume resampled_template;
  double similarity = 0.0;
  /// Finest-level similarity of each pyramid level's final iterate.
  std::vector<double> level_scores;
  std::size_t evaluations = 0;
};

namespace reg {

using Vec3 = Eigen::Vector3d;

/// Intensity image in millimetre space: position = offset + index * spacing,
/// axes ordered (x, y, z) = (col, row, slice).
struct WorkImage {
  Grid3<float> values;
  Vec3 spacing{1, 1, 1};
  Vec3 offset{0, 0, 0};

  std::size_t nx() const { return values.cols(); }
  std::size_t ny() const { return values.rows(); }
  std::size_t nz() const { return values.slices(); }
};

inline WorkImage to_work(const Volume& v, double lo, double hi) {
  WorkImage w;
  w.values = Grid3<float>(v.n_slices(), v.height(), v.width());
  w.spacing = Vec3(v.spacing[2], v.spacing[1], v.spacing[0]);
  const double scale = hi > lo ? 1.0 / (hi - lo) : 0.0;
  auto& out = w.values.data();
  const auto& in = v.data.data();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = float(std::clamp((double(in[i]) - lo) * scale, 0.0, 1.0));
  return w;
}

inline std::pair<float, float> min_max(const Volume& v) {
  const auto& d = v.data.data();
  auto [mn, mx] = std::minmax_element(d.begin(), d.end());
  return {*mn, *mx};
}

/// Box-average by integer factors per axis (x, y, z). An axis shorter than
/// its factor collapses to one voxel.
inline WorkImage downsample(const WorkImage& in, std::array<std::size_t, 3> factor) {
  std::array<std::size_t, 3> n{in.nx(), in.ny(), in.nz()};
  std::array<std::size_t, 3> f{}, m{};
  for (int a = 0; a < 3; ++a) {
    f[a] = std::max<std::size_t>(1, std::min(factor[a], n[a]));
    m[a] = n[a] / f[a];
  }
  if (f == std::array<std::size_t, 3>{1, 1, 1}) return in;
  WorkImage out;
  out.values = Grid3<float>(m[2], m[1], m[0]);
  for (int a = 0; a < 3; ++a) {
    out.spacing[a] = in.spacing[a] * double(f[a]);
    out.offset[a] = in.offset[a] + in.spacing[a] * double(f[a] - 1) / 2.0;
  }
  const double norm = 1.0 / double(f[0] * f[1] * f[2]);
  for (std::size_t z = 0; z < m[2]; ++z) {
    for (std::size_t y = 0; y < m[1]; ++y) {
      for (std::size_t x = 0; x < m[0]; ++x) {
        double acc = 0.0;
        for (std::size_t dz = 0; dz < f[2]; ++dz)
          for (std::size_t dy = 0; dy < f[1]; ++dy)
            for (std::size_t dx = 0; dx < f[0]; ++dx)
              acc += in.values(z * f[2] + dz, y * f[1] + dy, x * f[0] + dx);
        out.values(z, y, x) = float(acc * norm);
      }
    }
  }
  return out;
}

inline WorkImage cap_dimensions(const WorkImage& in, std::size_t max_dim) {
  std::array<std::size_t, 3> n{in.nx(), in.ny(), in.nz()};
  std::array<std::size_t, 3> f{};
  for (int a = 0; a < 3; ++a) f[a] = (n[a] + max_dim - 1) / max_dim;
  return downsample(in, f);
}

inline Vec3 center_of_mass(const WorkImage& w) {
  Vec3 acc(0, 0, 0);
  double total = 0.0;
  for (std::size_t z = 0; z < w.nz(); ++z)
    for (std::size_t y = 0; y < w.ny(); ++y)
      for (std::size_t x = 0; x < w.nx(); ++x) {
        double v = w.values(z, y, x);
        acc += v * Vec3(double(x), double(y), double(z));
        total += v;
      }
  Vec3 idx = total > 0 ? Vec3(acc / total)
                       : Vec3(double(w.nx() - 1) / 2, double(w.ny() - 1) / 2, double(w.nz() - 1) / 2);
  return w.offset + w.spacing.cwiseProduct(idx);
}

/// Trilinear sample at continuous index (x, y, z); false outside the grid.
inline bool sample(const Grid3<float>& g, double x, double y, double z, double& out) {
  const double nx = double(g.cols() - 1), ny = double(g.rows() - 1), nz = double(g.slices() - 1);
  constexpr double kEdge = 1e-9;
  if (x < -kEdge || y < -kEdge || z < -kEdge || x > nx + kEdge || y > ny + kEdge || z > nz + kEdge) return false;
  x = std::clamp(x, 0.0, nx);
  y = std::clamp(y, 0.0, ny);
  z = std::clamp(z, 0.0, nz);
  auto x0 = std::size_t(x), y0 = std::size_t(y), z0 = std::size_t(z);
  std::size_t x1 = std::min(x0 + 1, g.cols() - 1), y1 = std::min(y0 + 1, g.rows() - 1),
              z1 = std::min(z0 + 1, g.slices() - 1);
  double fx = x - double(x0), fy = y - double(y0), fz = z - double(z0);
  double c00 = g(z0, y0, x0) * (1 - fx) + g(z0, y0, x1) * fx;
  double c01 = g(z0, y1, x0) * (1 - fx) + g(z0, y1, x1) * fx;
  double c10 = g(z1, y0, x0) * (1 - fx) + g(z1, y0, x1) * fx;
  double c11 = g(z1, y1, x0) * (1 - fx) + g(z1, y1, x1) * fx;
  double c0 = c00 * (1 - fy) + c01 * fy;
  double c1 = c10 * (1 - fy) + c11 * fy;
  out = c0 * (1 - fz) + c1 * fz;
  return true;
}

/// Mutual information (nats) of a joint histogram laid out [fixed][moving].
inline double mutual_information(const std::vector<double>& joint, int bins) {
  std::vector<double> pf(std::size_t(bins), 0.0), pm(std::size_t(bins), 0.0);
  double total = 0.0;
  for (int i = 0; i < bins; ++i)
    for (int j = 0; j < bins; ++j) {
      double h = joint[std::size_t(i * bins + j)];
      pf[std::size_t(i)] += h;
      pm[std::size_t(j)] += h;
      total += h;
    }
  if (total <= 0.0) return 0.0;
  double mi = 0.0;
  for (int i = 0; i < bins; ++i) {
    if (pf[std::size_t(i)] <= 0.0) continue;
    for (int j = 0; j < bins; ++j) {
      double h = joint[std::size_t(i * bins + j)];
      if (h <= 0.0) continue;
      mi += h * std::log(h * total / (pf[std::size_t(i)] * pm[std::size_t(j)]));
    }
  }
  return mi / total;
}

/// Parameters: translation (mm), rotation (deg), log-scale, shear.
using Params = std::array<double, 12>;

struct Frame {
  Vec3 moving_center;  // template centre of mass (mm)
  Vec3 fixed_center;   // scan centre of mass (mm)
};

inline AffineTransform params_to_transform(const Params& p, const Frame& frame) {
  Eigen::Matrix3d rot = rotation_xyz_deg(p[3], p[4], p[5]);
  Eigen::Matrix3d shear = Eigen::Matrix3d::Identity();
  shear(0, 1) = p[9];
  shear(0, 2) = p[10];
  shear(1, 2) = p[11];
  Eigen::Matrix3d scale = Vec3(std::exp(p[6]), std::exp(p[7]), std::exp(p[8])).asDiagonal();
  Eigen::Matrix3d linear = rot * shear * scale;
  Vec3 t(p[0], p[1], p[2]);
  return AffineTransform::from_parts(linear, frame.fixed_center + t - linear * frame.moving_center);
}

/// MI between a fixed image and a moving image pulled back through
/// `transform` (moving mm -> fixed mm). Fixed bins are precomputed.
class Similarity {
 public:
  Similarity(const WorkImage& fixed, const WorkImage& moving, int bins)
      : fixed_(fixed), moving_(moving), bins_(bins), joint_(std::size_t(bins * bins)) {
    fixed_bins_.resize(fixed.values.size());
    const auto& fv = fixed.values.data();
    for (std::size_t i = 0; i < fv.size(); ++i) {
      fixed_bins_[i] = std::min(bins - 1, int(double(fv[i]) * bins));
    }
  }

  double operator()(const AffineTransform& transform) {
    ++evaluations_;
    // fixed index -> fixed mm -> moving mm -> moving index
    Eigen::Matrix4d to_mm = Eigen::Matrix4d::Identity();
    to_mm.topLeftCorner<3, 3>() = fixed_.spacing.asDiagonal();
    to_mm.topRightCorner<3, 1>() = fixed_.offset;
    Eigen::Matrix4d from_mm = Eigen::Matrix4d::Identity();
    from_mm.topLeftCorner<3, 3>() = moving_.spacing.cwiseInverse().asDiagonal();
    from_mm.topRightCorner<3, 1>() = -moving_.spacing.cwiseInverse().cwiseProduct(moving_.offset);
    Eigen::Matrix4d k = from_mm * transform.inverse().matrix() * to_mm;
    const Vec3 step_x = k.block<3, 1>(0, 0);
    const Vec3 step_y = k.block<3, 1>(0, 1);
    const Vec3 step_z = k.block<3, 1>(0, 2);
    const Vec3 base = k.block<3, 1>(0, 3);

    std::fill(joint_.begin(), joint_.end(), 0.0);
    const double top = double(bins_ - 1);
    const float* mv = moving_.values.data().data();
    const long mx = long(moving_.nx()), my = long(moving_.ny()), mz = long(moving_.nz());
    const double lim_x = double(mx - 1), lim_y = double(my - 1), lim_z = double(mz - 1);
    const long sy = mx, sz = mx * my;
    std::size_t i = 0;
    for (std::size_t z = 0; z < fixed_.nz(); ++z) {
      for (std::size_t y = 0; y < fixed_.ny(); ++y) {
        Vec3 u = base + double(z) * step_z + double(y) * step_y;
        double ux = u[0], uy = u[1], uz = u[2];
        for (std::size_t x = 0; x < fixed_.nx(); ++x, ++i, ux += step_x[0], uy += step_x[1], uz += step_x[2]) {
          // Outside the template grid reads as background (0).
          double m = 0.0;
          if (ux >= 0.0 && uy >= 0.0 && uz >= 0.0 && ux <= lim_x && uy <= lim_y && uz <= lim_z) {
            long x0 = long(ux), y0 = long(uy), z0 = long(uz);
            double fx = ux - double(x0), fy = uy - double(y0), fz = uz - double(z0);
            long dx = x0 + 1 < mx ? 1 : 0, dy = y0 + 1 < my ? sy : 0, dz = z0 + 1 < mz ? sz : 0;
            const float* p = mv + z0 * sz + y0 * sy + x0;
            double c00 = p[0] + fx * (p[dx] - p[0]);
            double c01 = p[dy] + fx * (p[dy + dx] - p[dy]);
            double c10 = p[dz] + fx * (p[dz + dx] - p[dz]);
            double c11 = p[dz + dy] + fx * (p[dz + dy + dx] - p[dz + dy]);
            double c0 = c00 + fy * (c01 - c00);
            double c1 = c10 + fy * (c11 - c10);
            m = c0 + fz * (c1 - c0);
          }
          double pos = std::clamp(m, 0.0, 1.0) * top;
          int b0 = std::min(int(pos), bins_ - 2);
          double frac = pos - double(b0);
          double* row = &joint_[std::size_t(fixed_bins_[i] * bins_)];
          row[b0] += 1.0 - frac;
          row[b0 + 1] += frac;
        }
      }
    }
    return mutual_information(joint_, bins_);
  }

  std::size_t evaluations() const { return evaluations_; }

 private:
  const WorkImage& fixed_;
  const WorkImage& moving_;
  int bins_;
  std::vector<int> fixed_bins_;
  std::vector<double> joint_;
  std::size_t evaluations_ = 0;
};

/// Search half-widths per parameter at a pyramid level whose voxels are
/// `voxel_mm` wide.
inline Params brackets_for_level(double voxel_mm, int level_index) {
  static constexpr double kRot[] = {30.0, 12.0, 5.0};
  static constexpr double kScale[] = {0.1, 0.05, 0.025};
  const int li = std::min(level_index, 2);
  const double t = 4.0 * voxel_mm;
  return {t, t, t, kRot[li], kRot[li], kRot[li], kScale[li], kScale[li], kScale[li], kScale[li], kScale[li], kScale[li]};
}

struct LevelOutcome {
  Params params;
  double score;
};

/// Round-robin golden-section ascent over the first `active` parameters.
inline LevelOutcome optimize_params(Similarity& sim, const Frame& frame, Params start, const Params& brackets,
                                    std::size_t active, int max_sweeps, int golden_iterations, double tolerance) {
  auto eval = [&](const Params& p) { return sim(params_to_transform(p, frame)); };
  Params best = start;
  double best_score = eval(best);
  constexpr double kInvPhi = 0.6180339887498949;
  double shrink = 1.0;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    const double sweep_start = best_score;
    for (std::size_t j = 0; j < active; ++j) {
      const double h = brackets[j] * shrink;
      double a = best[j] - h, b = best[j] + h;
      Params probe = best;
      auto at = [&](double x) {
        probe[j] = x;
        return eval(probe);
      };
      double c = b - kInvPhi * (b - a), d = a + kInvPhi * (b - a);
      double fc = at(c), fd = at(d);
      double arg = best[j], val = best_score;
      auto consider = [&](double x, double f) {
        if (f > val) {
          val = f;
          arg = x;
        }
      };
      consider(c, fc);
      consider(d, fd);
      for (int it = 0; it < golden_iterations; ++it) {
        if (fc > fd) {
          b = d;
          d = c;
          fd = fc;
          c = b - kInvPhi * (b - a);
          fc = at(c);
          consider(c, fc);
        } else {
          a = c;
          c = d;
          fc = fd;
          d = a + kInvPhi * (b - a);
          fd = at(d);
          consider(d, fd);
        }
      }
      best[j] = arg;
      best_score = val;
    }
    shrink *= 0.7;
    if (best_score - sweep_start < tolerance) break;
  }
  return {best, best_score};
}

inline constexpr std::size_t kRigidParams = 6;

/// One pyramid level: rigid parameters first, then all twelve.
inline LevelOutcome optimize_level(Similarity& sim, const Frame& frame, Params start, const Params& brackets,
                                   const RegistrationConfig& cfg) {
  auto rigid = optimize_params(sim, frame, start, brackets, kRigidParams, cfg.max_sweeps, cfg.golden_iterations,
                               cfg.sweep_tolerance);
  return optimize_params(sim, frame, rigid.params, brackets, rigid.params.size(), cfg.max_sweeps,
                         cfg.golden_iterations, cfg.sweep_tolerance);
}

/// Starting rotations for the coarsest level.
inline std::vector<Params> start_grid(const RegistrationConfig& cfg) {
  std::vector<double> angles{0.0};
  if (cfg.start_grid_deg > 0) angles = {0.0, -cfg.start_grid_deg, cfg.start_grid_deg};
  std::vector<double> turns{0.0};
  if (cfg.flip_search) turns.push_back(180.0);
  std::vector<Params> out;
  for (double turn : turns)
    for (double rx : angles)
      for (double ry : angles)
        for (double rz : angles) {
          Params p{};
          p[3] = rx;
          p[4] = ry;
          p[5] = rz + turn;
          out.push_back(p);
        }
  return out;
}

inline Volume resample_onto(const Volume& moving, const Volume& fixed, const AffineTransform& transform) {
  Volume out(fixed.n_slices(), fixed.height(), fixed.width(), fixed.spacing, 0.0f);
  out.origin = fixed.origin;
  Eigen::Matrix4d to_mm = Eigen::Matrix4d::Identity();
  to_mm.topLeftCorner<3, 3>() = Vec3(fixed.spacing[2], fixed.spacing[1], fixed.spacing[0]).asDiagonal();
  Eigen::Matrix4d from_mm = Eigen::Matrix4d::Identity();
  from_mm.topLeftCorner<3, 3>() =
      Vec3(1.0 / moving.spacing[2], 1.0 / moving.spacing[1], 1.0 / moving.spacing[0]).asDiagonal();
  Eigen::Matrix4d k = from_mm * transform.inverse().matrix() * to_mm;
  for (std::size_t z = 0; z < fixed.n_slices(); ++z)
    for (std::size_t y = 0; y < fixed.height(); ++y)
      for (std::size_t x = 0; x < fixed.width(); ++x) {
        Eigen::Vector4d u = k * Eigen::Vector4d(double(x), double(y), double(z), 1.0);
        double v;
        if (sample(moving.data, u[0], u[1], u[2], v)) out(z, y, x) = float(v);
      }
  return out;
}

}  // namespace reg

/// Registers `template_volume` (moving) to `target` (fixed, HU). The target
/// is only read. Returns the template->scan transform, the template resampled
/// onto the target grid, and the final mutual information.
inline RegistrationResult register_template(const Volume& template_volume, const Volume& target,
                                            const RegistrationConfig& cfg = {}) {
  using namespace reg;
  if (template_volume.data.empty() || target.data.empty()) {
    throw Error(ErrorCode::DegenerateVolume, "empty volume");
  }
  if (target.n_slices() < 3) throw Error(ErrorCode::DegenerateVolume, "target needs at least 3 slices");
  auto [tmin, tmax] = min_max(template_volume);
  auto [smin, smax] = min_max(target);
  if (!(tmax > tmin) || !(smax > smin)) throw Error(ErrorCode::DegenerateVolume, "constant-intensity volume");

  WorkImage fixed = cap_dimensions(to_work(target, cfg.ct_window_min, cfg.ct_window_max), cfg.max_working_dim);
  WorkImage moving = cap_dimensions(to_work(template_volume, tmin, tmax), cfg.max_working_dim);
  const auto& fv = fixed.values.data();
  if (std::all_of(fv.begin(), fv.end(), [&](float x) { return x == fv.front(); })) {
    throw Error(ErrorCode::DegenerateVolume, "target is constant inside the CT window");
  }

  Frame frame{center_of_mass(moving), center_of_mass(fixed)};

  std::vector<std::pair<WorkImage, WorkImage>> levels;
  for (int factor : cfg.pyramid) {
    auto f = std::size_t(std::max(1, factor));
    levels.emplace_back(downsample(fixed, {f, f, f}), downsample(moving, {f, f, f}));
  }
  Similarity finest(levels.back().first, levels.back().second, cfg.histogram_bins);

  RegistrationResult result;
  std::size_t evaluations = 0;
  struct Candidate {
    Params params;
    double fine;
  };

  // Screen the start grid with one short rigid sweep at the coarsest level.
  std::vector<Candidate> candidates;
  {
    const auto& [lf, lm] = levels.front();
    Similarity sim(lf, lm, cfg.histogram_bins);
    Params brackets = brackets_for_level(lf.spacing.maxCoeff(), 0);
    std::vector<std::pair<double, Params>> screened;
    for (const auto& start : start_grid(cfg)) {
      auto quick = optimize_params(sim, frame, start, brackets, kRigidParams, 1, cfg.golden_iterations / 2,
                                   cfg.sweep_tolerance);
      screened.emplace_back(quick.score, start);
    }
    evaluations += sim.evaluations();
    std::stable_sort(screened.begin(), screened.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    screened.resize(std::min(screened.size(), std::max<std::size_t>(1, cfg.keep_after_coarse)));
    for (const auto& [score, start] : screened) candidates.push_back({start, -std::numeric_limits<double>::infinity()});
    if (std::none_of(candidates.begin(), candidates.end(), [](const Candidate& c) { return c.params == Params{}; })) {
      candidates.push_back({Params{}, -std::numeric_limits<double>::infinity()});
    }
  }

  for (std::size_t li = 0; li < levels.size(); ++li) {
    const auto& [lf, lm] = levels[li];
    Similarity sim(lf, lm, cfg.histogram_bins);
    Params brackets = brackets_for_level(lf.spacing.maxCoeff(), int(li));
    for (auto& cand : candidates) {
      auto outcome = optimize_level(sim, frame, cand.params, brackets, cfg);
      // A level result that scores worse at full resolution is discarded.
      double fine = finest(params_to_transform(outcome.params, frame));
      if (fine >= cand.fine) cand = {outcome.params, fine};
    }
    evaluations += sim.evaluations();
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.fine > b.fine; });
    std::size_t keep = li == 0 ? cfg.keep_after_coarse : cfg.keep_after_middle;
    if (li + 1 < levels.size()) candidates.resize(std::min(candidates.size(), std::max<std::size_t>(1, keep)));
    result.level_scores.push_back(candidates.front().fine);
  }
  evaluations += finest.evaluations();
  const Params current = candidates.front().params;
  const double current_fine = candidates.front().fine;

  result.transform = params_to_transform(current, frame);
  result.similarity = current_fine;
  result.evaluations = evaluations;
  if (result.similarity < cfg.min_similarity) {
    throw Error(ErrorCode::NonConvergence, "similarity " + std::to_string(result.similarity) +
                                               " below floor " + std::to_string(cfg.min_similarity));
  }
  result.resampled_template = resample_onto(template_volume, target, result.transform);
  return result;
}

}  // namespace ctprep
