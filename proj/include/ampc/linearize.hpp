#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "ampc/so3.hpp"
#include "ampc/srb.hpp"

namespace ampc {

// Reduced (local-frame, augmented) state layout:
//   [0..2] p   position relative to the per-solve anchor (m)
//   [3..5] v   COM velocity, world frame (m/s)
//   [6..8] xi  attitude error log(R_ref^T R) (rad)
//   [9..11] w  body angular rate (rad/s)
//   [12]   c   constant slot, always 1
inline constexpr int kStateDim = 13;
inline constexpr int kPhysicalStateDim = 12;

namespace state_index {
inline constexpr int kPos = 0;
inline constexpr int kVel = 3;
inline constexpr int kAtt = 6;
inline constexpr int kRate = 9;
inline constexpr int kConst = 12;
}  // namespace state_index

using StateVector = Eigen::Matrix<double, kStateDim, 1>;
using StateMatrix = Eigen::Matrix<double, kStateDim, kStateDim>;
using InputMatrix = Eigen::Matrix<double, kStateDim, kNumInputs>;

struct OperatingPoint {
  Mat3 rotation = Mat3::Identity();
  Vec3 omega = Vec3::Zero();
  InputVector forces = InputVector::Zero();
  std::array<Vec3, kNumFeet> arms{Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
  StanceFlags stance{true, true, true, true};
  Vec3 attitude = Vec3::Zero();      // xi at the operating point; rotation = rot_z(yaw) exp(attitude)
  Vec3 body_torque = Vec3::Zero();   // R^T sum_j skew(arm_j) f_j over stance feet

  /// Builds a consistent operating point; swing-foot forces are zeroed.
  static OperatingPoint make(const Mat3& rotation, const Vec3& omega,
                             const InputVector& forces,
                             const std::array<Vec3, kNumFeet>& arms,
                             const StanceFlags& stance,
                             const Vec3& attitude = Vec3::Zero()) {
    OperatingPoint op;
    op.rotation = rotation;
    op.attitude = attitude;
    op.omega = omega;
    op.arms = arms;
    op.stance = stance;
    op.forces = forces;
    for (int j = 0; j < kNumFeet; ++j) {
      if (!stance[j]) op.forces.segment<3>(3 * j).setZero();
    }
    op.body_torque = rotation.transpose() * op.world_torque();
    return op;
  }

  Vec3 world_torque() const {
    Vec3 tau = Vec3::Zero();
    for (int j = 0; j < kNumFeet; ++j) {
      if (stance[j]) tau += arms[j].cross(forces.segment<3>(3 * j));
    }
    return tau;
  }

  bool consistent(double tol = 1e-9) const {
    return (body_torque - rotation.transpose() * world_torque()).cwiseAbs().maxCoeff() <= tol;
  }
};

struct LtvModel {
  StateMatrix a = StateMatrix::Identity();
  InputMatrix b = InputMatrix::Zero();
  double sample_time = 0.0;

  StateVector step(const StateVector& x, const InputVector& u) const { return a * x + b * u; }
};

/// Explicit-Euler discretization of the SRB dynamics linearized about `op`.
/// Gravity and the gyroscopic drift ride on the constant slot so the model is
/// purely linear in the augmented state.
inline LtvModel build_ltv(const OperatingPoint& op, const InertialParams& params,
                          double sample_time, const Vec3& gravity) {
  using namespace state_index;
  if (!(sample_time > 0.0)) throw std::invalid_argument("build_ltv: T_s must be > 0");
  Eigen::LDLT<Mat3> ldlt(params.inertia);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      std::abs(params.inertia.determinant()) < 1e-300) {
    throw std::invalid_argument("build_ltv: singular inertia");
  }
  const Mat3 inv_inertia = params.inertia.inverse();
  const double ts = sample_time;
  const Mat3& inertia = params.inertia;
  const Vec3& wbar = op.omega;
  const Mat3 rt = op.rotation.transpose();

  LtvModel m;
  m.sample_time = ts;
  m.a.block<3, 3>(kPos, kVel) = ts * Mat3::Identity();
  m.a.block<3, 1>(kVel, kConst) = -ts * gravity;
  m.a.block<3, 3>(kAtt, kRate) = ts * Mat3::Identity();

  const Mat3 rate_jac = skew(inertia * wbar) - skew(wbar) * inertia;
  const Mat3 att_jac = skew(op.body_torque) * so3_right_jacobian(op.attitude);
  m.a.block<3, 3>(kRate, kAtt) = ts * inv_inertia * att_jac;
  m.a.block<3, 3>(kRate, kRate) += ts * inv_inertia * rate_jac;

  Vec3 drift = -rate_jac * wbar - att_jac * op.attitude + op.body_torque - wbar.cross(inertia * wbar);
  for (int j = 0; j < kNumFeet; ++j) {
    if (!op.stance[j]) continue;
    const Mat3 arm_map = rt * skew(op.arms[j]);
    m.b.block<3, 3>(kVel, 3 * j) = (ts / params.mass) * Mat3::Identity();
    m.b.block<3, 3>(kRate, 3 * j) = ts * inv_inertia * arm_map;
    drift -= arm_map * op.forces.segment<3>(3 * j);
  }
  m.a.block<3, 1>(kRate, kConst) = ts * inv_inertia * drift;
  return m;
}

/// Expresses the plant state in the receding local frame: position relative
/// to `anchor`, attitude as the rotation vector of rot_z(yaw)^T R.
inline StateVector to_local_frame(const RigidBodyState& state, double reference_yaw,
                                  const Vec3& anchor) {
  using namespace state_index;
  StateVector x;
  x.segment<3>(kPos) = state.position - anchor;
  x.segment<3>(kVel) = state.velocity;
  x.segment<3>(kAtt) = so3_log(rot_z(reference_yaw).transpose() * state.rotation);
  x.segment<3>(kRate) = state.omega;
  x(kConst) = 1.0;
  return x;
}

}  // namespace ampc
