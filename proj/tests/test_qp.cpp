#include <gtest/gtest.h>

#include <random>

#include "ampc/qp.hpp"
#include "oracles.hpp"
#include "random_qp.hpp"

using namespace ampc::qp;

namespace {

QpProblem unconstrained(int d) {
  QpProblem p;
  p.hessian = Eigen::MatrixXd::Identity(d, d);
  p.linear = Eigen::VectorXd::Zero(d);
  p.constraints.resize(0, d);
  p.lower.resize(0);
  p.upper.resize(0);
  return p;
}

}  // namespace

TEST(Qp, UnconstrainedMinimum) {
  const auto s = QpSolver().solve(unconstrained(4));
  ASSERT_EQ(s.status, QpStatus::kOptimal);
  EXPECT_EQ(s.y.norm(), 0.0);
}

TEST(Qp, BoxProjection) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int t = 0; t < 200; ++t) {
    const int d = 5;
    QpProblem p = unconstrained(d);
    Eigen::VectorXd c(d), lb(d), ub(d);
    for (int i = 0; i < d; ++i) {
      c(i) = n(rng);
      lb(i) = -std::abs(n(rng));
      ub(i) = std::abs(n(rng));
    }
    p.hessian *= 2.0;
    p.linear = -2.0 * c;
    p.constraints = Eigen::MatrixXd::Identity(d, d);
    p.lower = lb;
    p.upper = ub;
    const auto s = QpSolver().solve(p);
    ASSERT_EQ(s.status, QpStatus::kOptimal);
    EXPECT_LT((s.y - c.cwiseMax(lb).cwiseMin(ub)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Qp, MatchesEnumerationOracle) {
  std::mt19937_64 rng(17);
  int infeasible = 0;
  for (int t = 0; t < 1000; ++t) {
    const QpProblem p = testcase::random_qp(rng);
    const auto ref = oracle::enumerate_qp(p);
    const auto s = QpSolver().solve(p);
    if (!ref.feasible) {
      ++infeasible;
      EXPECT_EQ(s.status, QpStatus::kInfeasible) << "problem " << t;
      continue;
    }
    ASSERT_EQ(s.status, QpStatus::kOptimal) << "problem " << t;
    EXPECT_LT(std::abs(s.objective - ref.objective), 1e-7 * std::max(1.0, std::abs(ref.objective))) << t;
    EXPECT_LT(s.kkt.max(), 1e-8) << t;
  }
  EXPECT_GT(infeasible, 0);
}

TEST(Qp, WarmStartAgrees) {
  std::mt19937_64 rng(19);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 300; ++t) {
    const QpProblem p = testcase::random_qp(rng);
    QpSolver solver;
    const auto cold = solver.solve(p);
    if (cold.status != QpStatus::kOptimal) continue;
    Eigen::VectorXd w = cold.y;
    for (int i = 0; i < w.size(); ++i) w(i) += 0.3 * n(rng);
    const auto warm = solver.solve(p, w);
    ASSERT_EQ(warm.status, QpStatus::kOptimal);
    EXPECT_LT(std::abs(warm.objective - cold.objective), 1e-8 * std::max(1.0, std::abs(cold.objective)));
  }
}

TEST(Qp, Deterministic) {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 100; ++t) {
    const QpProblem p = testcase::random_qp(rng);
    const auto a = QpSolver().solve(p), b = QpSolver().solve(p);
    EXPECT_EQ(a.status, b.status);
    EXPECT_EQ(a.y, b.y);
    EXPECT_EQ(a.iterations, b.iterations);
  }
}

TEST(Qp, RejectsIndefiniteHessian) {
  QpProblem p = unconstrained(2);
  p.hessian(1, 1) = -1.0;
  EXPECT_THROW(QpSolver().solve(p), std::invalid_argument);
  p.hessian(1, 1) = 0.0;
  EXPECT_THROW(QpSolver().solve(p), std::invalid_argument);
}

TEST(Qp, RejectsInvertedBounds) {
  QpProblem p = unconstrained(2);
  p.constraints = Eigen::MatrixXd::Identity(2, 2);
  p.lower = Eigen::Vector2d(1.0, 0.0);
  p.upper = Eigen::Vector2d(0.0, 1.0);
  EXPECT_THROW(QpSolver().solve(p), std::invalid_argument);
}

TEST(Qp, EqualityConstraint) {
  QpProblem p = unconstrained(3);
  p.constraints = Eigen::RowVector3d(1.0, 1.0, 1.0);
  p.lower = p.upper = Eigen::VectorXd::Constant(1, 3.0);
  const auto s = QpSolver().solve(p);
  ASSERT_EQ(s.status, QpStatus::kOptimal);
  EXPECT_LT((s.y - Eigen::Vector3d::Ones()).norm(), 1e-12);
  EXPECT_NEAR(s.multipliers(0), 1.0, 1e-12);
}

TEST(Qp, IterationCapReported) {
  // Many simultaneously violated rows with a cap of one step.
  QpProblem p = unconstrained(4);
  p.linear = Eigen::VectorXd::Constant(4, 10.0);
  p.constraints = Eigen::MatrixXd::Identity(4, 4);
  p.lower = Eigen::VectorXd::Zero(4);
  p.upper = Eigen::VectorXd::Constant(4, 1.0);
  QpSettings settings;
  settings.max_iterations = 1;
  const auto s = QpSolver(settings).solve(p);
  EXPECT_EQ(s.status, QpStatus::kMaxIter);
}
