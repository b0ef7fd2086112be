#include <gtest/gtest.h>

#include <random>

#include "ampc/so3.hpp"
#include "ampc/srb.hpp"
#include "oracles.hpp"

using namespace ampc;

namespace {

FootSet symmetric_feet(double z = 0.0) {
  FootSet f;
  f.positions = {Vec3(0.2, -0.13, z), Vec3(0.2, 0.13, z), Vec3(-0.2, -0.13, z), Vec3(-0.2, 0.13, z)};
  return f;
}

InertialParams a1_like() {
  InertialParams p;
  p.mass = 12.45;
  p.inertia = Vec3(0.0168, 0.0565, 0.0647).asDiagonal();
  return p;
}

}  // namespace

TEST(So3, ExpLogRoundTrip) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    const Mat3 r = oracle::random_rotation(rng, 3.1);
    EXPECT_LT((so3_exp(so3_log(r)) - r).norm(), 1e-9);
    EXPECT_LT((so3_exp(so3_log(r)) - oracle::expm_so3(so3_log(r))).norm(), 1e-12);
  }
}

TEST(So3, LogOfYawIncrement) {
  const Mat3 ref = oracle::expm_so3(Vec3(0.1, -0.2, 0.7));
  const Vec3 xi = so3_log(ref.transpose() * ref * rot_z(0.1));
  EXPECT_NEAR(xi.x(), 0.0, 1e-9);
  EXPECT_NEAR(xi.y(), 0.0, 1e-9);
  EXPECT_NEAR(xi.z(), 0.1, 1e-9);
}

TEST(So3, RightJacobianMatchesDifferential) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 0.6);
  for (int i = 0; i < 200; ++i) {
    const Vec3 phi(n(rng), n(rng), n(rng));
    const Mat3 jr = so3_right_jacobian(phi);
    for (int k = 0; k < 3; ++k) {
      const double h = 1e-6;
      Vec3 dp = Vec3::Zero();
      dp(k) = h;
      // exp(phi + d) ~ exp(phi) exp(J_r d)
      const Mat3 lhs = oracle::expm_so3(phi).transpose() * oracle::expm_so3(phi + dp);
      const Vec3 col = vee(lhs - lhs.transpose()) / (2.0 * h);
      EXPECT_LT((col - jr.col(k)).norm(), 1e-6);
    }
  }
}

TEST(So3, PolarProjectionRestoresOrthonormality) {
  Mat3 m = rot_z(0.4);
  m(0, 1) += 1e-6;
  const Mat3 r = polar_project(m);
  EXPECT_LT(orthonormality_error(r), 1e-14);
  EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
}

TEST(Srb, FreeFall) {
  RigidBodyState s;
  s.omega = Vec3(0.3, -0.2, 0.5);
  s.rotation = rot_z(0.3);
  const InertialParams p = a1_like();
  FootSet feet = symmetric_feet();
  const auto d = srb_derivative(s, InputVector::Zero(), feet, p, standard_gravity());
  EXPECT_LT((d.acceleration - Vec3(0, 0, -9.81)).norm(), 1e-15);
  const Vec3 expect = -p.inertia.inverse() * s.omega.cross(p.inertia * s.omega);
  EXPECT_LT((d.angular_acceleration - expect).norm(), 1e-12);
}

TEST(Srb, StaticEquilibrium) {
  RigidBodyState s;
  s.position = Vec3(0, 0, 0.26);
  const InertialParams p = a1_like();
  InputVector u = InputVector::Zero();
  for (int j = 0; j < 4; ++j) u(3 * j + 2) = p.mass * 9.81 / 4.0;
  const auto d = srb_derivative(s, u, symmetric_feet(), p, standard_gravity());
  EXPECT_LT(d.acceleration.norm(), 1e-12);
  EXPECT_LT(d.angular_acceleration.norm(), 1e-12);
}

TEST(Srb, GyroscopicHandValue) {
  RigidBodyState s;
  s.omega = Vec3(1, 1, 1);
  InertialParams p;
  p.inertia = Vec3(1, 2, 3).asDiagonal();
  FootSet feet = symmetric_feet();
  const auto d = srb_derivative(s, InputVector::Zero(), feet, p, standard_gravity());
  // w x Iw = (1,1,1) x (1,2,3) = (1, -2, 1); -I^-1 of it = (-1, 1, -1/3).
  EXPECT_NEAR(d.angular_acceleration.x(), -1.0, 1e-12);
  EXPECT_NEAR(d.angular_acceleration.y(), 1.0, 1e-12);
  EXPECT_NEAR(d.angular_acceleration.z(), -1.0 / 3.0, 1e-12);
}

TEST(Srb, RejectsBadInput) {
  RigidBodyState s;
  FootSet feet = symmetric_feet();
  feet.stance[2] = false;
  InputVector u = InputVector::Zero();
  u(3 * 2 + 2) = 1.0;
  EXPECT_THROW(srb_derivative(s, u, feet, a1_like(), standard_gravity()), std::invalid_argument);
  feet.stance[2] = true;
  s.velocity.x() = std::nan("");
  EXPECT_THROW(srb_derivative(s, u, feet, a1_like(), standard_gravity()), std::invalid_argument);
}

TEST(Srb, ConstantAxisRotation) {
  RigidBodyState s;
  s.omega = Vec3(0, 0, 1);
  InertialParams p;
  p.inertia = 0.1 * Mat3::Identity();
  FootSet feet;
  feet.stance = {false, false, false, false};
  for (int i = 0; i < 1000; ++i) s = integrate_step(s, InputVector::Zero(), feet, p, 1e-3, standard_gravity());
  EXPECT_NEAR(roll_pitch_yaw(s.rotation).z(), 1.0, 1e-6);
  EXPECT_LT(orthonormality_error(s.rotation), 1e-9);
}

TEST(Srb, Ballistic) {
  RigidBodyState s;
  FootSet feet;
  feet.stance = {false, false, false, false};
  for (int i = 0; i < 500; ++i) s = integrate_step(s, InputVector::Zero(), feet, a1_like(), 1e-3, standard_gravity());
  EXPECT_NEAR(s.velocity.z(), -9.81 * 0.5, 1e-9);
}

TEST(Srb, StepHalvingConverges) {
  RigidBodyState s0;
  s0.position = Vec3(0, 0, 0.26);
  s0.velocity = Vec3(0.4, 0.1, -0.05);
  s0.rotation = oracle::expm_so3(Vec3(0.05, -0.08, 0.3));
  s0.omega = Vec3(0.8, -0.5, 1.2);
  const InertialParams p = a1_like();
  FootSet feet = symmetric_feet();
  InputVector u;
  for (int j = 0; j < 4; ++j) u.segment<3>(3 * j) = Vec3(2.0 * j - 3.0, 1.5 - j, 30.0 + 4.0 * j);
  auto run = [&](double dt) {
    RigidBodyState s = s0;
    const int n = static_cast<int>(std::lround(0.1 / dt));
    for (int i = 0; i < n; ++i) s = integrate_step(s, u, feet, p, dt, standard_gravity());
    return s;
  };
  const RigidBodyState a = run(1e-3), b = run(5e-4);
  const double diff = (a.position - b.position).norm() + (a.velocity - b.velocity).norm() +
                      (a.rotation - b.rotation).norm() + (a.omega - b.omega).norm();
  EXPECT_LT(diff, 1e-8);
}

TEST(Srb, EnergyConservedWithoutForces) {
  RigidBodyState s;
  s.position = Vec3(0, 0, 5.0);
  s.velocity = Vec3(1.0, -0.5, 2.0);
  s.omega = Vec3(2.0, -1.0, 3.0);
  const InertialParams p = a1_like();
  FootSet feet;
  feet.stance = {false, false, false, false};
  const double e0 = mechanical_energy(s, p, standard_gravity());
  for (int i = 0; i < 1000; ++i) s = integrate_step(s, InputVector::Zero(), feet, p, 1e-3, standard_gravity());
  EXPECT_LT(std::abs(mechanical_energy(s, p, standard_gravity()) - e0) / std::abs(e0), 1e-5);
}

TEST(Srb, OrthonormalityOverMillionSteps) {
  RigidBodyState s;
  s.omega = Vec3(3.0, -2.0, 5.0);
  const InertialParams p = a1_like();
  FootSet feet;
  feet.stance = {false, false, false, false};
  double worst = 0.0;
  for (int i = 0; i < 1000000; ++i) {
    s = integrate_step(s, InputVector::Zero(), feet, p, 1e-3, Vec3::Zero());
    if (i % 1000 == 0) worst = std::max(worst, orthonormality_error(s.rotation));
  }
  worst = std::max(worst, orthonormality_error(s.rotation));
  EXPECT_LT(worst, 1e-6);
  EXPECT_NEAR(s.rotation.determinant(), 1.0, 1e-9);
}

TEST(Payload, ZeroMassLeavesParams) {
  const InertialParams p = a1_like();
  const auto c = combine_payload(p, Vec3::Zero(), PayloadSpec{});
  EXPECT_EQ(c.params.mass, p.mass);
  EXPECT_EQ(c.params.inertia, p.inertia);
  EXPECT_EQ(c.com_shift, Vec3::Zero());
}

TEST(Payload, PointMassAtCom) {
  const InertialParams p = a1_like();
  PayloadSpec s;
  s.mass = 3.0;
  const auto c = combine_payload(p, Vec3::Zero(), s);
  EXPECT_DOUBLE_EQ(c.params.mass, 15.45);
  EXPECT_LT((c.params.inertia - p.inertia).norm(), 1e-15);
  EXPECT_EQ(c.com_shift, Vec3::Zero());
}

TEST(Payload, ParallelAxisOracle) {
  const InertialParams p = a1_like();
  PayloadSpec s;
  s.mass = 2.0;
  s.offset = Vec3(0.1, 0.0, 0.0);
  const auto c = combine_payload(p, Vec3::Zero(), s);
  const double shift = 2.0 * 0.1 / 14.45;
  EXPECT_NEAR(c.com_shift.x(), shift, 1e-15);
  const double expect_yy = p.inertia(1, 1) + 2.0 * (0.1 - shift) * (0.1 - shift) + 12.45 * shift * shift;
  EXPECT_NEAR(c.params.inertia(1, 1), expect_yy, 1e-14);
  EXPECT_NO_THROW(c.params.validate());
}

TEST(Payload, OrderIndependent) {
  const InertialParams p = a1_like();
  const PayloadSpec a = PayloadSpec::box(2.0, Vec3(0.05, 0.02, 0.07), Vec3(0.2, 0.1, 0.1));
  const PayloadSpec b = PayloadSpec::box(3.5, Vec3(-0.08, -0.03, 0.09), Vec3(0.1, 0.3, 0.05));
  const auto ab1 = combine_payload(p, Vec3::Zero(), a);
  const auto ab = combine_payload(ab1.params, ab1.com_offset, b);
  const auto ba1 = combine_payload(p, Vec3::Zero(), b);
  const auto ba = combine_payload(ba1.params, ba1.com_offset, a);
  EXPECT_NEAR(ab.params.mass, ba.params.mass, 1e-12);
  EXPECT_LT((ab.params.inertia - ba.params.inertia).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((ab.com_offset - ba.com_offset).norm(), 1e-12);
}

TEST(Payload, ValidationRejectsNegativeMass) {
  PayloadSpec s;
  s.mass = -1.0;
  EXPECT_THROW(combine_payload(a1_like(), Vec3::Zero(), s), std::invalid_argument);
}
