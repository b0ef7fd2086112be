#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>

namespace ampc {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Skew-symmetric (hat) operator: skew(a) * b == a.cross(b).
inline Mat3 skew(const Vec3& a) {
  Mat3 s;
  // clang-format off
  s <<  0.0,  -a.z(),  a.y(),
       a.z(),   0.0,  -a.x(),
      -a.y(),  a.x(),   0.0;
  // clang-format on
  return s;
}

inline Vec3 vee(const Mat3& s) { return {s(2, 1), s(0, 2), s(1, 0)}; }

/// Rodrigues exponential of a rotation vector.
inline Mat3 so3_exp(const Vec3& phi) {
  const double angle = phi.norm();
  const Mat3 k = skew(phi);
  if (angle < 1e-8) {
    return Mat3::Identity() + k + 0.5 * k * k;
  }
  const double a = std::sin(angle) / angle;
  const double b = (1.0 - std::cos(angle)) / (angle * angle);
  return Mat3::Identity() + a * k + b * k * k;
}

/// Rotation vector of R. Near pi the axis is recovered from the symmetric
/// part; exactly pi (within 1e-12) has no unique sign and is rejected.
inline Vec3 so3_log(const Mat3& rot) {
  const double cos_angle = std::clamp(0.5 * (rot.trace() - 1.0), -1.0, 1.0);
  const Vec3 w = 0.5 * vee(rot - rot.transpose());
  const double sin_angle = w.norm();
  const double angle = std::atan2(sin_angle, cos_angle);
  if (angle < 1e-8) {
    return w;
  }
  if (std::numbers::pi - angle > 1e-3) {
    return (angle / sin_angle) * w;
  }
  if (std::numbers::pi - angle < 1e-12) {
    throw std::domain_error("so3_log: rotation angle is exactly pi");
  }
  // Stable branch: axis from the largest diagonal entry of (R + I)/2 = a a^T
  // scaled, sign fixed by the (small but nonzero) antisymmetric part.
  const Mat3 sym = 0.5 * (rot + Mat3::Identity());
  int k = 0;
  sym.diagonal().maxCoeff(&k);
  Vec3 axis = sym.col(k) / std::sqrt(std::max(sym(k, k), 1e-300));
  axis.normalize();
  if (axis.dot(w) < 0.0) axis = -axis;
  return angle * axis;
}

/// Right Jacobian: exp(phi + d) ~ exp(phi) exp(J_r(phi) d).
inline Mat3 so3_right_jacobian(const Vec3& phi) {
  const double t = phi.norm();
  const Mat3 s = skew(phi);
  if (t < 1e-6) return Mat3::Identity() - 0.5 * s + (1.0 / 6.0) * s * s;
  return Mat3::Identity() - ((1.0 - std::cos(t)) / (t * t)) * s +
         ((t - std::sin(t)) / (t * t * t)) * s * s;
}

inline Mat3 rot_z(double yaw) {
  return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
}

/// Nearest rotation in Frobenius norm (polar factor via SVD).
inline Mat3 polar_project(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) = -u.col(2);
  return u * v.transpose();
}

inline double orthonormality_error(const Mat3& rot) {
  return (rot.transpose() * rot - Mat3::Identity()).norm();
}

/// Z-Y-X Euler angles (roll, pitch, yaw).
inline Vec3 roll_pitch_yaw(const Mat3& rot) {
  const double pitch = std::asin(std::clamp(-rot(2, 0), -1.0, 1.0));
  const double roll = std::atan2(rot(2, 1), rot(2, 2));
  const double yaw = std::atan2(rot(1, 0), rot(0, 0));
  return {roll, pitch, yaw};
}

}  // namespace ampc
