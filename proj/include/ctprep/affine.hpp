#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "ctprep/error.hpp"

namespace ctprep {

/// Homogeneous 4x4 map from template millimetres to scan millimetres.
/// Millimetre coordinates are (x, y, z) = (col, row, slice) * spacing,
/// measured from the centre of voxel (0, 0, 0).
class AffineTransform {
 public:
  AffineTransform() : m_(Eigen::Matrix4d::Identity()) {}
  explicit AffineTransform(const Eigen::Matrix4d& m) : m_(m) {
    if ((m_.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-12) {
      throw Error(ErrorCode::MalformedElement, "affine last row must be (0,0,0,1)");
    }
    m_.row(3) = Eigen::RowVector4d(0, 0, 0, 1);
  }
  static AffineTransform from_parts(const Eigen::Matrix3d& linear, const Eigen::Vector3d& translation) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = linear;
    m.topRightCorner<3, 1>() = translation;
    return AffineTransform(m);
  }

  const Eigen::Matrix4d& matrix() const noexcept { return m_; }
  Eigen::Matrix3d linear_part() const { return m_.topLeftCorner<3, 3>(); }
  Eigen::Vector3d translation() const { return m_.topRightCorner<3, 1>(); }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return linear_part() * p + translation(); }
  AffineTransform inverse() const {
    Eigen::Matrix3d inv = linear_part().inverse();
    return from_parts(inv, -inv * translation());
  }
  AffineTransform then(const AffineTransform& next) const { return AffineTransform(next.m_ * m_); }

  /// Four lines of four space-separated decimals, row-major.
  std::string to_text() const {
    std::string out;
    char buf[64];
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", m_(r, c) == 0.0 ? 0.0 : m_(r, c));
        out += buf;
        out += c < 3 ? ' ' : '\n';
      }
    }
    return out;
  }

  static AffineTransform from_text(const std::string& text) {
    std::istringstream in(text);
    Eigen::Matrix4d m;
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        if (!(in >> m(r, c))) throw Error(ErrorCode::MalformedElement, "transform file needs 16 numbers");
      }
    }
    return AffineTransform(m);
  }

 private:
  Eigen::Matrix4d m_;
};

/// Rotation Rz * Ry * Rx with angles in degrees.
inline Eigen::Matrix3d rotation_xyz_deg(double rx, double ry, double rz) {
  constexpr double kDeg = M_PI / 180.0;
  return (Eigen::AngleAxisd(rz * kDeg, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(ry * kDeg, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(rx * kDeg, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

/// Rotation angle (degrees) of the orthogonal polar factor of `m`.
inline double rotation_angle_deg(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;
}

}  // namespace ctprep
