#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ampc/regressor.hpp"

namespace ampc {

struct AdaptiveState {
  Eigen::VectorXd theta_hat;
  Eigen::MatrixXd gamma_prev;        // Gamma(t-1); empty until the first tick
  double lambda = 0.2;
  bool pin_constant = false;         // hold theta_hat[0] at 1 instead of adapting it

  // Test mode: with the true parameters known, V = |theta - theta_hat|^2
  // is recorded after every update.
  std::optional<Eigen::VectorXd> theta_true;
  std::vector<double> v_lyap;

  // Outcome of the most recent update.
  Eigen::VectorXd last_error;        // x_tilde(t)
  bool last_skipped = false;

  bool has_gamma() const { return gamma_prev.size() > 0; }

  static AdaptiveState initial(const Eigen::VectorXd& theta0, double lambda) {
    if (!(lambda > 0.0)) throw std::invalid_argument("AdaptiveState: lambda must be > 0");
    if (!theta0.allFinite()) throw std::invalid_argument("AdaptiveState: non-finite theta");
    AdaptiveState s;
    s.theta_hat = theta0;
    s.lambda = lambda;
    return s;
  }
};

struct StabilityReport {
  double lambda_max = 0.0;
  double threshold = 0.0;
  bool satisfied = false;
  double margin = 0.0;
};

inline Eigen::VectorXd predict_state(const Eigen::MatrixXd& gamma, const Eigen::VectorXd& theta_hat) {
  return gamma * theta_hat;
}

/// theta <- theta + lambda Gamma(t-1)^T (x(t) - Gamma(t-1) theta).
/// A non-finite measurement leaves theta untouched and sets last_skipped.
inline AdaptiveState gradient_update(AdaptiveState s, const Eigen::VectorXd& x_measured) {
  s.last_skipped = false;
  if (!s.has_gamma()) {
    s.last_error.resize(0);
    return s;
  }
  if (!x_measured.allFinite() || x_measured.size() != s.gamma_prev.rows()) {
    s.last_skipped = true;
    s.last_error = Eigen::VectorXd::Constant(s.gamma_prev.rows(),
                                             std::numeric_limits<double>::quiet_NaN());
    return s;
  }
  const Eigen::VectorXd error = x_measured - s.gamma_prev * s.theta_hat;
  Eigen::VectorXd next = s.theta_hat + s.lambda * s.gamma_prev.transpose() * error;
  if (s.pin_constant) next(0) = 1.0;
  if (!next.allFinite()) {
    s.last_skipped = true;
    s.last_error = error;
    return s;
  }
  s.theta_hat = std::move(next);
  s.last_error = error;
  if (s.theta_true) s.v_lyap.push_back((*s.theta_true - s.theta_hat).squaredNorm());
  return s;
}

/// Largest eigenvalue of the Gram matrix Gamma Gamma^T against 2/lambda.
inline StabilityReport spectral_check(const Eigen::MatrixXd& gamma, double lambda) {
  StabilityReport r;
  r.threshold = 2.0 / lambda;
  if (gamma.size() > 0) {
    const Eigen::MatrixXd gram = gamma * gamma.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    r.lambda_max = std::max(0.0, eig.eigenvalues().maxCoeff());
  }
  r.margin = r.threshold - r.lambda_max;
  r.satisfied = r.margin > 0.0;
  return r;
}

/// Maximum absolute row sum, the norm nu(H) with |z^T H|_1 <= |z|_1 nu(H).
inline double max_abs_row_sum(const Eigen::MatrixXd& h) {
  return h.rows() == 0 ? 0.0 : h.cwiseAbs().rowwise().sum().maxCoeff();
}

inline constexpr int kSingleStateMode = 1;
inline constexpr int kCertifiedMode = kStateDim;

struct InputBound {
  bool feasible = false;
  double bound = 0.0;       // per-component |u_j| limit when feasible
  double h_norm = 0.0;      // max_i nu(H_i)
};

/// Per-input box that, together with |x|_1 <= eps_x, implies the spectral
/// condition. n_eff = 1 is the bound as originally stated; n_eff = n uses
/// lambda_max <= trace, which makes the implication hold for n-row Gamma.
inline InputBound convex_input_bound(const HStack& stack, double lambda, double eps_x, int n_eff) {
  if (!(lambda > 0.0)) throw std::invalid_argument("convex_input_bound: lambda must be > 0");
  if (n_eff < 1) throw std::invalid_argument("convex_input_bound: n_eff must be >= 1");
  InputBound out;
  for (const auto& h : stack.h) out.h_norm = std::max(out.h_norm, max_abs_row_sum(h));
  const int m_u = stack.input_dim();
  if (out.h_norm == 0.0 || m_u <= 0) {
    out.feasible = true;
    out.bound = std::numeric_limits<double>::infinity();
    return out;
  }
  const double b = (std::sqrt(2.0 / (lambda * n_eff)) / out.h_norm - eps_x) / m_u;
  out.feasible = b >= 0.0;
  out.bound = out.feasible ? b : 0.0;
  return out;
}

struct ParameterEstimates {
  double mass = std::numeric_limits<double>::quiet_NaN();
  bool mass_valid = false;
  Mat3 inv_inertia = Mat3::Zero();
};

inline ParameterEstimates extract_estimates(const Eigen::VectorXd& theta_hat) {
  ParameterEstimates e;
  const double inv_mass = theta_hat(theta_index::kInvMass);
  if (inv_mass > 0.0 && std::isfinite(inv_mass)) {
    e.mass = 1.0 / inv_mass;
    e.mass_valid = true;
  }
  Mat3 inv;
  for (int a = 0; a < 9; ++a) inv(a / 3, a % 3) = theta_hat(theta_index::kInvInertia + a);
  e.inv_inertia = 0.5 * (inv + inv.transpose());
  return e;
}

}  // namespace ampc
