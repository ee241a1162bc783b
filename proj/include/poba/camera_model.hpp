#pragma once

#include <cmath>
#include <optional>

#include <Eigen/Geometry>

#include "poba/bal_io.hpp"
#include "poba/common.hpp"

namespace poba {

/// Depth magnitude below which an observation is treated as invalid.
inline constexpr double kMinDepth = 1e-12;

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

inline Mat3 rotation_matrix(const Vec3& w) {
  const double angle = w.norm();
  if (angle < 1e-300) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

inline Vec3 rotation_log(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

/// Camera update x ⊞ delta: the rotation increment is composed on the right,
/// R' = R * Exp(delta_w); all other parameters are added.
inline CameraParams box_plus(const CameraParams& cam, const PoseVec& delta) {
  CameraParams out = cam;
  out.rotation = canonical_rotation(
      rotation_log(rotation_matrix(cam.rotation) *
                   rotation_matrix(delta.segment<3>(0))));
  out.translation += delta.segment<3>(3);
  out.focal += delta[6];
  out.k1 += delta[7];
  out.k2 += delta[8];
  return out;
}

/// BAL projection. Empty when the camera-frame depth is (numerically) zero.
inline std::optional<Vec2> project(const CameraParams& cam, const Vec3& point) {
  const Vec3 pc = rotation_matrix(cam.rotation) * point + cam.translation;
  if (std::abs(pc.z()) < kMinDepth) return std::nullopt;
  const Vec2 p = -pc.head<2>() / pc.z();
  const double r2 = p.squaredNorm();
  const double d = 1.0 + cam.k1 * r2 + cam.k2 * r2 * r2;
  return Vec2(cam.focal * d * p);
}

struct ObservationJacobians {
  Eigen::Matrix<double, 2, kPoseDim> pose;
  Eigen::Matrix<double, 2, kPointDim> point;
};

struct ResidualAndJacobians {
  Vec2 residual = Vec2::Zero();
  ObservationJacobians jac{};
  bool valid = false;
};

/// Residual project(cam, point) - observed and its analytic Jacobians. The
/// rotation columns are derivatives with respect to the right increment used
/// by box_plus. Invalid observations come back zeroed with valid == false.
inline ResidualAndJacobians residual_and_jacobians(const CameraParams& cam,
                                                   const Vec3& point,
                                                   const Vec2& observed) {
  ResidualAndJacobians out;
  out.jac.pose.setZero();
  out.jac.point.setZero();

  const Mat3 rot = rotation_matrix(cam.rotation);
  const Vec3 rotated = rot * point;
  const Vec3 pc = rotated + cam.translation;
  if (std::abs(pc.z()) < kMinDepth) return out;

  const double inv_z = 1.0 / pc.z();
  const Vec2 p = -pc.head<2>() / pc.z();
  const double r2 = p.squaredNorm();
  const double d = 1.0 + cam.k1 * r2 + cam.k2 * r2 * r2;

  out.residual = Vec2(cam.focal * d * p) - observed;
  out.valid = true;

  // d p / d pc
  Eigen::Matrix<double, 2, 3> dp_dpc;
  dp_dpc << -inv_z, 0.0, -p.x() * inv_z,  //
      0.0, -inv_z, -p.y() * inv_z;
  // d (f d p) / d p
  const double dd_dr2 = cam.k1 + 2.0 * cam.k2 * r2;
  const Eigen::Matrix2d dproj_dp =
      cam.focal * (d * Eigen::Matrix2d::Identity() +
                   2.0 * dd_dr2 * p * p.transpose());
  const Eigen::Matrix<double, 2, 3> dproj_dpc = dproj_dp * dp_dpc;

  out.jac.pose.block<2, 3>(0, 0) = -dproj_dpc * rot * skew(point);
  out.jac.pose.block<2, 3>(0, 3) = dproj_dpc;
  out.jac.pose.col(6) = d * p;
  out.jac.pose.col(7) = cam.focal * r2 * p;
  out.jac.pose.col(8) = cam.focal * r2 * r2 * p;
  out.jac.point = dproj_dpc * rot;
  return out;
}

}  // namespace poba
