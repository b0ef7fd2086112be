#pragma once

#include <array>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ampc/linearize.hpp"
#include "ampc/srb.hpp"

namespace ampc {

// Parameter vector layout (version 1, see docs/theta_layout.md):
//   [0]       1
//   [1]       1/m
//   [2..10]   inverse inertia, row-major
//   [11..64]  kappa(a, s) = invI[a] * I[s], a in 0..8 row-major,
//             s in {xx, yy, zz, xy, xz, yz}; index 11 + 6a + s
inline constexpr int kThetaDim = 65;
inline constexpr int kRegressorDim = kStateDim + kNumInputs;   // z = col(x_a, u)
inline constexpr int kThetaLayoutVersion = 1;

namespace theta_index {
inline constexpr int kOne = 0;
inline constexpr int kInvMass = 1;
inline constexpr int kInvInertia = 2;
inline constexpr int kKappa = 11;
inline constexpr int kappa(int a, int s) { return kKappa + 6 * a + s; }
}  // namespace theta_index

using ThetaVector = Eigen::Matrix<double, kThetaDim, 1>;
using RegressorVector = Eigen::Matrix<double, kRegressorDim, 1>;

namespace detail {

inline constexpr std::array<std::array<int, 2>, 6> kSymmetricEntries{
    {{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}}};

/// Basis E_s with I = sum_s I_s E_s for symmetric I.
inline Mat3 symmetric_basis(int s) {
  const auto [r, c] = kSymmetricEntries[s];
  Mat3 e = Mat3::Zero();
  e(r, c) = 1.0;
  e(c, r) = 1.0;
  return e;
}

}  // namespace detail

/// Coefficient matrices H_i: x_a(t+1)_i = z^T H_i theta. Dimensions are
/// generic so the adaptation law can be exercised on synthetic systems.
struct HStack {
  std::vector<Eigen::MatrixXd> h;

  int state_dim() const { return static_cast<int>(h.size()); }
  int regressor_dim() const { return h.empty() ? 0 : static_cast<int>(h.front().rows()); }
  int input_dim() const { return regressor_dim() - state_dim(); }
  int param_dim() const { return h.empty() ? 0 : static_cast<int>(h.front().cols()); }
};

inline ThetaVector theta_from_params(const InertialParams& params) {
  params.validate();
  const Mat3 inv = params.inertia.inverse();
  if (!inv.allFinite()) throw std::invalid_argument("theta_from_params: singular inertia");
  ThetaVector theta;
  theta(theta_index::kOne) = 1.0;
  theta(theta_index::kInvMass) = 1.0 / params.mass;
  for (int a = 0; a < 9; ++a) {
    const double inv_a = inv(a / 3, a % 3);
    theta(theta_index::kInvInertia + a) = inv_a;
    for (int s = 0; s < 6; ++s) {
      const auto [r, c] = detail::kSymmetricEntries[s];
      theta(theta_index::kappa(a, s)) = inv_a * params.inertia(r, c);
    }
  }
  return theta;
}

inline HStack build_h_stack(const OperatingPoint& op, double sample_time, const Vec3& gravity) {
  using namespace state_index;
  const double ts = sample_time;
  HStack stack;
  stack.h.assign(kStateDim, Eigen::MatrixXd::Zero(kRegressorDim, kThetaDim));
  auto& h = stack.h;

  for (int k = 0; k < 3; ++k) {
    h[kPos + k](kPos + k, 0) = 1.0;
    h[kPos + k](kVel + k, 0) = ts;

    h[kVel + k](kVel + k, 0) = 1.0;
    h[kVel + k](kConst, 0) = -ts * gravity(k);
    for (int j = 0; j < kNumFeet; ++j) {
      if (op.stance[j]) h[kVel + k](kStateDim + 3 * j + k, 1) = ts;
    }

    h[kAtt + k](kAtt + k, 0) = 1.0;
    h[kAtt + k](kRate + k, 0) = ts;

    h[kRate + k](kRate + k, 0) = 1.0;
  }
  h[kConst](kConst, 0) = 1.0;

  // Torque part, multiplied by invI:
  // N z = skew(tau_b) J_r (xi - xibar c) + sum R^T skew(r_j) (f_j - fbar_j c) + tau_b c.
  Eigen::Matrix<double, 3, kRegressorDim> torque_map =
      Eigen::Matrix<double, 3, kRegressorDim>::Zero();
  const Mat3 att_jac = skew(op.body_torque) * so3_right_jacobian(op.attitude);
  torque_map.block<3, 3>(0, kAtt) = att_jac;
  Vec3 torque_const = op.body_torque - att_jac * op.attitude;
  for (int j = 0; j < kNumFeet; ++j) {
    if (!op.stance[j]) continue;
    const Mat3 arm_map = op.rotation.transpose() * skew(op.arms[j]);
    torque_map.block<3, 3>(0, kStateDim + 3 * j) = arm_map;
    torque_const -= arm_map * op.forces.segment<3>(3 * j);
  }
  torque_map.col(kConst) = torque_const;

  // Gyroscopic part, linear in I: for each symmetric basis E_s,
  // T_s z = (skew(E_s w) - skew(w) E_s)(w_z - w c) - skew(w) E_s w c.
  const Vec3& wbar = op.omega;
  std::array<Eigen::Matrix<double, 3, kRegressorDim>, 6> gyro_maps;
  for (int s = 0; s < 6; ++s) {
    const Mat3 e = detail::symmetric_basis(s);
    const Mat3 jac = skew(e * wbar) - skew(wbar) * e;
    auto& m = gyro_maps[s];
    m.setZero();
    m.block<3, 3>(0, kRate) = jac;
    m.col(kConst) = -jac * wbar - wbar.cross(e * wbar);
  }

  for (int a = 0; a < 3; ++a) {
    auto& hr = h[kRate + a];
    for (int b = 0; b < 3; ++b) {
      const int inv_idx = 3 * a + b;
      hr.col(theta_index::kInvInertia + inv_idx) += ts * torque_map.row(b).transpose();
      for (int s = 0; s < 6; ++s) {
        hr.col(theta_index::kappa(inv_idx, s)) += ts * gyro_maps[s].row(b).transpose();
      }
    }
  }
  return stack;
}

inline RegressorVector make_regressor(const StateVector& x, const InputVector& u) {
  RegressorVector z;
  z << x, u;
  return z;
}

/// Gamma with row i = z^T H_i.
inline Eigen::MatrixXd build_gamma(const Eigen::VectorXd& z, const HStack& stack) {
  if (z.size() != stack.regressor_dim()) {
    throw std::invalid_argument("build_gamma: regressor dimension mismatch");
  }
  Eigen::MatrixXd gamma(stack.state_dim(), stack.param_dim());
  for (int i = 0; i < stack.state_dim(); ++i) {
    gamma.row(i).noalias() = z.transpose() * stack.h[i];
  }
  return gamma;
}

/// Rows (H_i theta)^T: the one-step map [A | B] implied by a parameter vector.
inline Eigen::MatrixXd regressor_dynamics(const HStack& stack, const Eigen::VectorXd& theta) {
  Eigen::MatrixXd m(stack.state_dim(), stack.regressor_dim());
  for (int i = 0; i < stack.state_dim(); ++i) {
    m.row(i).noalias() = (stack.h[i] * theta).transpose();
  }
  return m;
}

}  // namespace ampc
