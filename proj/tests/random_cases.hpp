#pragma once

#include <random>

#include "ampc/linearize.hpp"
#include "ampc/so3.hpp"
#include "ampc/srb.hpp"
#include "oracles.hpp"

namespace testcase {

using namespace ampc;

struct Case {
  OperatingPoint op;
  InertialParams params;
  double yaw = 0.0;
  Vec3 position, velocity;
};

/// Random operating point, stance set and inertial parameters.
inline Case random_case(std::mt19937_64& rng, bool any_stance = true) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> yaw(-3.1, 3.1);
  Case c;
  c.yaw = yaw(rng);
  const Vec3 xi = 0.4 * Vec3(u(rng), u(rng), u(rng)) / std::sqrt(3.0);
  const Mat3 rot = rot_z(c.yaw) * oracle::expm_so3(xi);
  const Vec3 omega(1.5 * u(rng), 1.5 * u(rng), 1.5 * u(rng));
  std::array<Vec3, kNumFeet> arms;
  const double sx[4] = {1, 1, -1, -1}, sy[4] = {-1, 1, -1, 1};
  StanceFlags stance;
  InputVector forces;
  for (int j = 0; j < 4; ++j) {
    arms[j] = rot_z(c.yaw) * Vec3(0.18 * sx[j] + 0.05 * u(rng), 0.13 * sy[j] + 0.05 * u(rng), -0.26 + 0.05 * u(rng));
    stance[j] = any_stance ? u(rng) > -0.4 : true;
    forces.segment<3>(3 * j) = Vec3(30.0 * u(rng), 30.0 * u(rng), 70.0 + 50.0 * u(rng));
  }
  c.op = OperatingPoint::make(rot, omega, forces, arms, stance, xi);
  c.params.mass = 8.0 + 17.0 * 0.5 * (1.0 + u(rng));
  c.params.inertia = oracle::random_spd(rng, 0.01, 0.3);
  c.position = Vec3(u(rng), u(rng), 0.3 * u(rng));
  c.velocity = Vec3(u(rng), u(rng), u(rng));
  return c;
}

inline oracle::ReducedDynamics dynamics_for(const Case& c) {
  oracle::ReducedDynamics d;
  d.yaw = c.yaw;
  d.arms = c.op.arms;
  d.stance = c.op.stance;
  d.mass = c.params.mass;
  d.inertia = c.params.inertia;
  return d;
}

/// Reduced state sitting at the operating point's attitude and rate.
inline Eigen::VectorXd operating_state(const Case& c) {
  Eigen::VectorXd x(13);
  x << c.position, c.velocity, c.op.attitude, c.op.omega, 1.0;
  return x;
}

}  // namespace testcase
