#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "ampc/so3.hpp"

namespace ampc {

inline constexpr int kNumFeet = 4;
inline constexpr int kNumInputs = 3 * kNumFeet;

using InputVector = Eigen::Matrix<double, kNumInputs, 1>;
using StanceFlags = std::array<bool, kNumFeet>;

inline Vec3 standard_gravity() { return {0.0, 0.0, 9.81}; }

/// Ground-truth state of the single rigid body. `position` and `velocity`
/// refer to the COM in the world frame, `omega` is expressed in the body frame.
struct RigidBodyState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
  Vec3 omega = Vec3::Zero();

  bool finite() const {
    return position.allFinite() && velocity.allFinite() &&
           rotation.allFinite() && omega.allFinite();
  }
};

struct InertialParams {
  double mass = 1.0;
  Mat3 inertia = Mat3::Identity();

  /// Throws std::invalid_argument unless mass > 0 and inertia is SPD.
  void validate() const {
    if (!(mass > 0.0) || !std::isfinite(mass)) {
      throw std::invalid_argument("InertialParams: mass must be positive");
    }
    if (!inertia.allFinite() ||
        (inertia - inertia.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw std::invalid_argument("InertialParams: inertia must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(inertia, Eigen::EigenvaluesOnly);
    if (!(eig.eigenvalues().minCoeff() > 0.0)) {
      throw std::invalid_argument("InertialParams: inertia must be SPD");
    }
  }
};

struct FootSet {
  std::array<Vec3, kNumFeet> positions{Vec3::Zero(), Vec3::Zero(),
                                       Vec3::Zero(), Vec3::Zero()};
  StanceFlags stance{true, true, true, true};

  int stance_count() const {
    int n = 0;
    for (bool s : stance) n += s ? 1 : 0;
    return n;
  }
};

struct PayloadSpec {
  double mass = 0.0;
  Vec3 offset = Vec3::Zero();           // from trunk COM, body frame
  Mat3 own_inertia = Mat3::Zero();      // about the payload COM

  void validate() const {
    if (!(mass >= 0.0) || !std::isfinite(mass)) {
      throw std::invalid_argument("PayloadSpec: mass must be non-negative");
    }
    if ((own_inertia - own_inertia.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw std::invalid_argument("PayloadSpec: inertia must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(own_inertia, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-12) {
      throw std::invalid_argument("PayloadSpec: inertia must be PSD");
    }
  }

  /// Uniform solid box with side lengths (a, b, c) along body x, y, z.
  static PayloadSpec box(double mass, const Vec3& offset, const Vec3& sides) {
    PayloadSpec p;
    p.mass = mass;
    p.offset = offset;
    const Vec3 s2 = sides.cwiseProduct(sides);
    p.own_inertia = (mass / 12.0) *
                    Vec3(s2.y() + s2.z(), s2.x() + s2.z(), s2.x() + s2.y()).asDiagonal();
    return p;
  }
};

struct StateDerivative {
  Vec3 position_rate;            // world
  Vec3 acceleration;             // world
  Vec3 body_rate;                // R_dot = R * skew(body_rate)
  Vec3 angular_acceleration;     // body
};

inline Vec3 foot_force(const InputVector& u, int foot) {
  return u.segment<3>(3 * foot);
}

/// Newton-Euler equations of the SRB. Moment arms are taken about the current
/// COM; `external_force` acts at the COM (pushes).
inline StateDerivative srb_derivative(const RigidBodyState& state,
                                      const InputVector& grfs,
                                      const FootSet& feet,
                                      const InertialParams& params,
                                      const Vec3& gravity,
                                      const Vec3& external_force = Vec3::Zero()) {
  if (!state.finite() || !grfs.allFinite() || !gravity.allFinite() ||
      !external_force.allFinite()) {
    throw std::invalid_argument("srb_derivative: non-finite input");
  }
  Vec3 f_net = external_force;
  Vec3 tau_net = Vec3::Zero();
  for (int j = 0; j < kNumFeet; ++j) {
    const Vec3 f = foot_force(grfs, j);
    if (!feet.stance[j]) {
      if (f.squaredNorm() != 0.0) {
        throw std::invalid_argument("srb_derivative: force on swing foot " +
                                    std::to_string(j));
      }
      continue;
    }
    if (!feet.positions[j].allFinite()) {
      throw std::invalid_argument("srb_derivative: non-finite foot position");
    }
    f_net += f;
    tau_net += (feet.positions[j] - state.position).cross(f);
  }
  const Mat3& inertia = params.inertia;
  const Vec3& w = state.omega;
  StateDerivative d;
  d.position_rate = state.velocity;
  d.acceleration = f_net / params.mass - gravity;
  d.body_rate = w;
  d.angular_acceleration =
      inertia.ldlt().solve(state.rotation.transpose() * tau_net - w.cross(inertia * w));
  return d;
}

namespace detail {

/// Truncated inverse of the SO(3) exponential's differential; enough terms
/// for a fourth-order Runge-Kutta-Munthe-Kaas step.
inline Vec3 dexp_inv(const Vec3& phi, const Vec3& w) {
  return w + 0.5 * phi.cross(w) + (1.0 / 12.0) * phi.cross(phi.cross(w));
}

}  // namespace detail

/// One fixed step of RK4 in (r, v, omega) coupled with the Munthe-Kaas lift
/// for the rotation, which is advanced as R * exp(skew(phi)).
inline RigidBodyState integrate_step(const RigidBodyState& state,
                                     const InputVector& grfs,
                                     const FootSet& feet,
                                     const InertialParams& params,
                                     double dt,
                                     const Vec3& gravity = standard_gravity(),
                                     const Vec3& external_force = Vec3::Zero()) {
  if (!(dt > 0.0)) throw std::invalid_argument("integrate_step: dt must be > 0");

  auto eval = [&](const RigidBodyState& s) {
    return srb_derivative(s, grfs, feet, params, gravity, external_force);
  };
  auto stage = [&](const StateDerivative& k, const Vec3& phi, double h) {
    RigidBodyState s;
    s.position = state.position + h * k.position_rate;
    s.velocity = state.velocity + h * k.acceleration;
    s.rotation = state.rotation * so3_exp(phi);
    s.omega = state.omega + h * k.angular_acceleration;
    return s;
  };

  const StateDerivative k1 = eval(state);
  const Vec3 p1 = k1.body_rate;

  const Vec3 phi2 = 0.5 * dt * p1;
  const StateDerivative k2 = eval(stage(k1, phi2, 0.5 * dt));
  const Vec3 p2 = detail::dexp_inv(phi2, k2.body_rate);

  const Vec3 phi3 = 0.5 * dt * p2;
  const StateDerivative k3 = eval(stage(k2, phi3, 0.5 * dt));
  const Vec3 p3 = detail::dexp_inv(phi3, k3.body_rate);

  const Vec3 phi4 = dt * p3;
  const StateDerivative k4 = eval(stage(k3, phi4, dt));
  const Vec3 p4 = detail::dexp_inv(phi4, k4.body_rate);

  RigidBodyState out;
  out.position = state.position + (dt / 6.0) * (k1.position_rate + 2.0 * k2.position_rate +
                                                 2.0 * k3.position_rate + k4.position_rate);
  out.velocity = state.velocity + (dt / 6.0) * (k1.acceleration + 2.0 * k2.acceleration +
                                                2.0 * k3.acceleration + k4.acceleration);
  out.omega = state.omega + (dt / 6.0) * (k1.angular_acceleration +
                                          2.0 * k2.angular_acceleration +
                                          2.0 * k3.angular_acceleration +
                                          k4.angular_acceleration);
  out.rotation = state.rotation * so3_exp((dt / 6.0) * (p1 + 2.0 * p2 + 2.0 * p3 + p4));
  if (orthonormality_error(out.rotation) > 1e-9) {
    out.rotation = polar_project(out.rotation);
  }
  return out;
}

struct PayloadCombination {
  InertialParams params;
  Vec3 com_shift = Vec3::Zero();    // new COM minus base COM, body frame
  Vec3 com_offset = Vec3::Zero();   // new COM relative to the trunk COM
};

/// Rigidly attaches `payload` to a body whose COM sits at `base_com_offset`
/// from the trunk COM. Inertia is transferred to the combined COM with the
/// parallel-axis theorem.
inline PayloadCombination combine_payload(const InertialParams& base,
                                          const Vec3& base_com_offset,
                                          const PayloadSpec& payload) {
  payload.validate();
  PayloadCombination out;
  out.params = base;
  out.com_offset = base_com_offset;
  if (payload.mass == 0.0) return out;

  const double total = base.mass + payload.mass;
  const Vec3 rel = payload.offset - base_com_offset;
  const Vec3 shift = (payload.mass / total) * rel;
  auto transfer = [](double m, const Vec3& d) {
    return m * (d.squaredNorm() * Mat3::Identity() - d * d.transpose());
  };
  Mat3 inertia = base.inertia + transfer(base.mass, -shift) + payload.own_inertia +
                 transfer(payload.mass, rel - shift);
  inertia = 0.5 * (inertia + inertia.transpose());

  out.params.mass = total;
  out.params.inertia = inertia;
  out.com_shift = shift;
  out.com_offset = base_com_offset + shift;
  return out;
}

inline double mechanical_energy(const RigidBodyState& s, const InertialParams& p,
                                const Vec3& gravity) {
  return 0.5 * p.mass * s.velocity.squaredNorm() +
         0.5 * s.omega.dot(p.inertia * s.omega) + p.mass * gravity.dot(s.position);
}

}  // namespace ampc
