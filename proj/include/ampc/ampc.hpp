#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ampc/adapt.hpp"
#include "ampc/gait.hpp"
#include "ampc/linearize.hpp"
#include "ampc/qp.hpp"
#include "ampc/regressor.hpp"
#include "ampc/srb.hpp"

namespace ampc {

struct MpcConfig {
  int horizon = 7;
  double sample_time = 6.25e-3;
  Eigen::VectorXd q = default_q();        // diagonal of Q over the 13 states
  double p_scale = 10.0;                  // P = p_scale * Q
  double r = 1.0;                         // R = r * I
  double lambda = 0.2;
  double eps_x = 4.0;
  int n_eff = kCertifiedMode;
  double mu = 0.6;
  double f_z_min = 0.5;
  double f_z_max = 250.0;
  double gravity = 9.81;
  bool adaptation_enabled = true;
  bool pin_constant = false;
  bool stability_constraint = false;
  bool feedforward_cost = true;           // penalize u - u_ff instead of u

  static Eigen::VectorXd default_q() {
    Eigen::VectorXd q(kStateDim);
    q << 1e5, 2e5, 1e6, 1e5, 1e5, 1e5, 1e3, 1e3, 1e3, 5e3, 5e3, 5e3, 0.0;
    return q;
  }

  void validate() const {
    if (horizon < 1) throw std::invalid_argument("MpcConfig: horizon must be >= 1");
    if (!(sample_time > 0.0)) throw std::invalid_argument("MpcConfig: sample_time must be > 0");
    if (q.size() != kStateDim) throw std::invalid_argument("MpcConfig: q must have 13 entries");
    for (int i = 0; i < kPhysicalStateDim; ++i) {
      if (!(q(i) > 0.0)) throw std::invalid_argument("MpcConfig: Q must be positive definite");
    }
    if (!(q(kStateDim - 1) >= 0.0)) throw std::invalid_argument("MpcConfig: constant-slot weight must be >= 0");
    if (!(p_scale > 0.0)) throw std::invalid_argument("MpcConfig: P must be positive definite");
    if (!(r > 0.0)) throw std::invalid_argument("MpcConfig: R must be positive definite");
    if (!(lambda > 0.0)) throw std::invalid_argument("MpcConfig: lambda must be > 0");
    if (!(eps_x > 0.0)) throw std::invalid_argument("MpcConfig: eps_x must be > 0");
    if (n_eff < 1) throw std::invalid_argument("MpcConfig: n_eff must be >= 1");
    if (!(mu >= 0.0)) throw std::invalid_argument("MpcConfig: mu must be >= 0");
    if (!(f_z_min >= 0.0 && f_z_max >= f_z_min)) throw std::invalid_argument("MpcConfig: bad vertical force range");
    if (!(gravity > 0.0)) throw std::invalid_argument("MpcConfig: gravity must be > 0");
  }

  Vec3 gravity_vector() const { return {0.0, 0.0, gravity}; }
};

inline MpcConfig baseline_mode(MpcConfig cfg) {
  cfg.adaptation_enabled = false;
  return cfg;
}

struct Command {
  Vec3 v_des = Vec3::Zero();
  double yaw_rate = 0.0;
  double height = 0.26;
};

/// Desired local-frame states for steps 1..N (row k-1 is step k).
inline Eigen::MatrixXd build_reference(const Command& cmd, int horizon, double sample_time,
                                       double nominal_height = 0.26) {
  using namespace state_index;
  Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(horizon, kStateDim);
  for (int k = 1; k <= horizon; ++k) {
    auto row = ref.row(k - 1);
    const double t = k * sample_time;
    row(kPos + 0) = cmd.v_des.x() * t;
    row(kPos + 1) = cmd.v_des.y() * t;
    row(kPos + 2) = cmd.height - nominal_height + cmd.v_des.z() * t;
    row.segment<3>(kVel) = cmd.v_des.transpose();
    row(kAtt + 2) = cmd.yaw_rate * t;
    row(kRate + 2) = cmd.yaw_rate;
    row(kConst) = 1.0;
  }
  return ref;
}

struct MpcDiagnostics {
  int num_variables = 0;
  int num_constraints = 0;
  int active_constraints = 0;
  int iterations = 0;
  double solve_time = 0.0;
  InputBound input_bound;
};

struct MpcSolution {
  InputVector u0 = InputVector::Zero();
  Eigen::MatrixXd predicted_states;   // N x 13, steps 1..N
  Eigen::MatrixXd predicted_inputs;   // N x 12, steps 0..N-1
  qp::QpStatus status = qp::QpStatus::kInfeasible;
  StabilityReport stability;          // realized Gamma(x0, u0)
  MpcDiagnostics diagnostics;
  Eigen::VectorXd decision;           // raw QP solution

  double stability_margin() const { return stability.margin; }
  bool optimal() const { return status == qp::QpStatus::kOptimal; }
};

/// Gravity-support force per stance foot under the estimated mass.
inline double support_force(const Eigen::VectorXd& theta_hat, double gravity, int n_stance) {
  const double inv_mass = theta_hat(theta_index::kInvMass);
  if (n_stance == 0 || !(inv_mass > 0.0) || !std::isfinite(inv_mass)) return 0.0;
  return gravity / (inv_mass * n_stance);
}

inline InputVector feedforward_input(const Eigen::VectorXd& theta_hat, const StanceFlags& stance,
                                     const MpcConfig& cfg) {
  InputVector u = InputVector::Zero();
  int n = 0;
  for (bool s : stance) n += s ? 1 : 0;
  const double fz = std::clamp(support_force(theta_hat, cfg.gravity, n), cfg.f_z_min, cfg.f_z_max);
  for (int j = 0; j < kNumFeet; ++j) {
    if (stance[j]) u(3 * j + 2) = fz;
  }
  return u;
}

/// Largest violation of the friction pyramid, unilateral contact and the
/// vertical bounds; swing feet must carry exactly zero force.
inline double grf_violation(const InputVector& u, const StanceFlags& stance, double mu,
                            double f_z_min, double f_z_max) {
  double v = 0.0;
  for (int j = 0; j < kNumFeet; ++j) {
    const Vec3 f = foot_force(u, j);
    if (!stance[j]) {
      v = std::max(v, f.cwiseAbs().maxCoeff());
      continue;
    }
    v = std::max({v, std::abs(f.x()) - mu * f.z(), std::abs(f.y()) - mu * f.z(), f_z_min - f.z(),
                  f.z() - f_z_max, -f.z()});
  }
  return v;
}

/// Condensed AMPC over a frozen regressor stack. Decision variables are the
/// forces of the stance feet at each step (vertical only when mu = 0).
class MpcProblemBuilder {
 public:
  struct Layout {
    std::vector<int> step_offset;                // first variable of each step
    std::vector<std::vector<int>> input_index;   // per step: full input index of each variable
    int size = 0;
  };

  static Layout layout(const std::vector<StanceFlags>& stance, double mu) {
    Layout l;
    for (const auto& s : stance) {
      l.step_offset.push_back(l.size);
      std::vector<int> idx;
      for (int j = 0; j < kNumFeet; ++j) {
        if (!s[j]) continue;
        if (mu > 0.0) {
          for (int k = 0; k < 3; ++k) idx.push_back(3 * j + k);
        } else {
          idx.push_back(3 * j + 2);
        }
      }
      l.size += static_cast<int>(idx.size());
      l.input_index.push_back(std::move(idx));
    }
    return l;
  }
};

class MpcSolver {
 public:
  explicit MpcSolver(qp::QpSettings settings = {}) : qp_(settings) {}

  MpcSolution solve(const StateVector& x0, const Eigen::VectorXd& theta_hat, const HStack& stack,
                    const ContactSchedule& schedule, const Eigen::MatrixXd& ref, const MpcConfig& cfg,
                    const std::optional<Eigen::VectorXd>& warm_start = std::nullopt) {
    using namespace state_index;
    cfg.validate();
    const int n_h = cfg.horizon;
    if (static_cast<int>(schedule.horizon.size()) != n_h) {
      throw std::invalid_argument("build_and_solve: schedule horizon does not match N");
    }
    if (ref.rows() != n_h || ref.cols() != kStateDim) {
      throw std::invalid_argument("build_and_solve: reference must be N x 13");
    }
    if (theta_hat.size() != stack.param_dim() || stack.state_dim() != kStateDim ||
        stack.regressor_dim() != kRegressorDim) {
      throw std::invalid_argument("build_and_solve: dimension mismatch");
    }

    const Eigen::MatrixXd m = regressor_dynamics(stack, theta_hat);
    const StateMatrix a = m.leftCols(kStateDim);
    const InputMatrix b = m.rightCols(kNumInputs);

    const auto lay = MpcProblemBuilder::layout(schedule.horizon, cfg.mu);
    const int nv = lay.size;

    // x_k = Sx_k x0 + Su_k y for k = 1..N.
    std::vector<StateVector> free(n_h);
    std::vector<Eigen::MatrixXd> su(n_h, Eigen::MatrixXd::Zero(kStateDim, nv));
    StateVector x = x0;
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(kStateDim, nv);
    for (int k = 0; k < n_h; ++k) {
      x = a * x;
      acc = a * acc;
      const auto& idx = lay.input_index[k];
      for (size_t v = 0; v < idx.size(); ++v) acc.col(lay.step_offset[k] + v) += b.col(idx[v]);
      free[k] = x;
      su[k] = acc;
    }

    std::vector<InputVector> u_ff(n_h);
    for (int k = 0; k < n_h; ++k) {
      u_ff[k] = cfg.feedforward_cost ? feedforward_input(theta_hat, schedule.horizon[k], cfg)
                                     : InputVector::Zero();
    }

    MpcSolution sol;
    sol.diagnostics.num_variables = nv;

    if (cfg.stability_constraint) {
      sol.diagnostics.input_bound = convex_input_bound(stack, cfg.lambda, cfg.eps_x, cfg.n_eff);
    }

    Eigen::VectorXd y = Eigen::VectorXd::Zero(nv);
    if (nv > 0) {
      qp::QpProblem p;
      p.hessian = Eigen::MatrixXd::Zero(nv, nv);
      p.linear = Eigen::VectorXd::Zero(nv);
      for (int k = 0; k < n_h; ++k) {
        const double scale = (k == n_h - 1) ? cfg.p_scale : 1.0;
        const Eigen::VectorXd w = scale * cfg.q;
        const StateVector e = free[k] - ref.row(k).transpose();
        p.hessian.noalias() += su[k].transpose() * w.asDiagonal() * su[k];
        p.linear.noalias() += su[k].transpose() * w.cwiseProduct(e);
        const auto& idx = lay.input_index[k];
        for (size_t v = 0; v < idx.size(); ++v) {
          const int col = lay.step_offset[k] + static_cast<int>(v);
          p.hessian(col, col) += cfg.r;
          p.linear(col) -= cfg.r * u_ff[k](idx[v]);
        }
      }
      p.hessian = 0.5 * (p.hessian + p.hessian.transpose());

      std::vector<Eigen::RowVectorXd> rows;
      std::vector<double> lo, hi;
      auto add_row = [&](Eigen::RowVectorXd r, double l, double h) {
        rows.push_back(std::move(r));
        lo.push_back(l);
        hi.push_back(h);
      };
      const double inf = std::numeric_limits<double>::infinity();
      const bool bounded = cfg.stability_constraint && sol.diagnostics.input_bound.feasible &&
                           std::isfinite(sol.diagnostics.input_bound.bound);
      const double ub = sol.diagnostics.input_bound.bound;
      for (int k = 0; k < n_h; ++k) {
        const auto& idx = lay.input_index[k];
        for (size_t v = 0; v < idx.size(); ++v) {
          const int col = lay.step_offset[k] + static_cast<int>(v);
          const int comp = idx[v] % 3;
          if (comp == 2) {
            Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(nv);
            r(col) = 1.0;
            add_row(r, cfg.f_z_min, cfg.f_z_max);
            if (cfg.mu > 0.0) {
              for (int lat = 0; lat < 2; ++lat) {
                Eigen::RowVectorXd r1 = Eigen::RowVectorXd::Zero(nv);
                r1(col - 2 + lat) = 1.0;
                r1(col) = -cfg.mu;
                add_row(r1, -inf, 0.0);
                Eigen::RowVectorXd r2 = Eigen::RowVectorXd::Zero(nv);
                r2(col - 2 + lat) = 1.0;
                r2(col) = cfg.mu;
                add_row(r2, 0.0, inf);
              }
            }
          }
          if (bounded) {
            Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(nv);
            r(col) = 1.0;
            add_row(r, -ub, ub);
          }
        }
        if (bounded) {
          // |x_i| <= (eps_x - 1)/12 on the physical states keeps |x|_1 <= eps_x
          // with the constant slot at 1.
          const double box = (cfg.eps_x - 1.0) / kPhysicalStateDim;
          for (int i = 0; i < kPhysicalStateDim; ++i) {
            add_row(su[k].row(i), -box - free[k](i), box - free[k](i));
          }
        }
      }
      const int nc = static_cast<int>(rows.size());
      p.constraints.resize(nc, nv);
      p.lower.resize(nc);
      p.upper.resize(nc);
      for (int i = 0; i < nc; ++i) {
        p.constraints.row(i) = rows[i];
        p.lower(i) = lo[i];
        p.upper(i) = hi[i];
      }
      sol.diagnostics.num_constraints = nc;

      if (cfg.stability_constraint && !sol.diagnostics.input_bound.feasible) {
        sol.status = qp::QpStatus::kInfeasible;
      } else {
        std::optional<Eigen::VectorXd> ws;
        if (warm_start && warm_start->size() == nv) ws = warm_start;
        const qp::QpSolution q = qp_.solve(p, ws);
        sol.status = q.status;
        sol.diagnostics.iterations = q.iterations;
        sol.diagnostics.solve_time = q.solve_time;
        sol.diagnostics.active_constraints = q.active_count;
        y = q.y;
      }
    } else {
      sol.status = (cfg.stability_constraint && !sol.diagnostics.input_bound.feasible)
                       ? qp::QpStatus::kInfeasible
                       : qp::QpStatus::kOptimal;
    }

    sol.decision = y;
    sol.predicted_inputs = Eigen::MatrixXd::Zero(n_h, kNumInputs);
    sol.predicted_states = Eigen::MatrixXd::Zero(n_h, kStateDim);
    for (int k = 0; k < n_h; ++k) {
      const auto& idx = lay.input_index[k];
      for (size_t v = 0; v < idx.size(); ++v) {
        sol.predicted_inputs(k, idx[v]) = y(lay.step_offset[k] + static_cast<int>(v));
      }
      sol.predicted_states.row(k) = (free[k] + su[k] * y).transpose();
    }
    sol.u0 = sol.predicted_inputs.row(0).transpose();
    const Eigen::MatrixXd gamma = build_gamma(make_regressor(x0, sol.u0), stack);
    sol.stability = spectral_check(gamma, cfg.lambda);
    return sol;
  }

 private:
  qp::QpSolver qp_;
};

inline MpcSolution build_and_solve(const StateVector& x0, const Eigen::VectorXd& theta_hat,
                                   const HStack& stack, const ContactSchedule& schedule,
                                   const Eigen::MatrixXd& ref, const MpcConfig& cfg,
                                   const std::optional<Eigen::VectorXd>& warm_start = std::nullopt) {
  MpcSolver solver;
  return solver.solve(x0, theta_hat, stack, schedule, ref, cfg, warm_start);
}

/// Per-tick measurement handed to the controller (ideal state feedback).
struct Measurement {
  RigidBodyState body;
  FootSet feet;
  double ground = 0.0;   // terrain reference height under the body
};

struct TickResult {
  InputVector u0 = InputVector::Zero();
  qp::QpStatus status = qp::QpStatus::kOptimal;
  bool fallback = false;
  StateVector x_local = StateVector::Zero();          // x(t) in the current frame
  StateVector x_measured_prev = StateVector::Zero();  // x(t) in the previous frame
  StateVector x_predicted = StateVector::Zero();      // Gamma(t-1) theta_hat(t-1)
  StateVector x_error = StateVector::Zero();          // x_measured_prev - x_predicted
  StateVector x_next_predicted = StateVector::Zero(); // Gamma(t) theta_hat(t)
  StabilityReport stability;
  double mass_hat = 0.0;
  int iterations = 0;
  int active_constraints = 0;
  double solve_time = 0.0;
  bool update_skipped = false;
};

/// Receding-horizon loop around build_and_solve: adapts theta_hat from the
/// one-step prediction error, rebuilds the local frame and regressor stack,
/// solves, and falls back to the previous plan when the QP fails.
class AmpcController {
 public:
  AmpcController(const MpcConfig& cfg, const InertialParams& nominal, double nominal_height = 0.26)
      : cfg_(cfg), nominal_height_(nominal_height) {
    cfg_.validate();
    adapt_ = AdaptiveState::initial(theta_from_params(nominal), cfg.lambda);
    adapt_.pin_constant = cfg.pin_constant;
  }

  const MpcConfig& config() const { return cfg_; }
  /// Takes effect on the next tick; estimate and plan history are kept.
  void set_config(const MpcConfig& cfg) {
    cfg.validate();
    cfg_ = cfg;
    adapt_.lambda = cfg.lambda;
    adapt_.pin_constant = cfg.pin_constant;
  }
  const AdaptiveState& adaptive_state() const { return adapt_; }
  AdaptiveState& adaptive_state() { return adapt_; }
  const Eigen::VectorXd& theta_hat() const { return adapt_.theta_hat; }
  const std::optional<MpcSolution>& last_solution() const { return last_; }

  /// `cmd.v_des` is given in the heading frame.
  TickResult tick(const Measurement& meas, const Command& cmd, const ContactSchedule& schedule) {
    TickResult out;
    const Vec3 rpy = roll_pitch_yaw(meas.body.rotation);

    if (has_frame_) {
      out.x_measured_prev = to_local_frame(meas.body, prev_yaw_, prev_anchor_);
      out.x_predicted = adapt_.gamma_prev * adapt_.theta_hat;
      out.x_error = out.x_measured_prev - out.x_predicted;
      if (cfg_.adaptation_enabled) {
        adapt_ = gradient_update(std::move(adapt_), out.x_measured_prev);
        out.update_skipped = adapt_.last_skipped;
      }
    }

    const double yaw = rpy.z();
    const Vec3 anchor(meas.body.position.x(), meas.body.position.y(), meas.ground + nominal_height_);
    const StateVector x0 = to_local_frame(meas.body, yaw, anchor);
    out.x_local = x0;

    const StanceFlags& stance = schedule.now;
    std::array<Vec3, kNumFeet> arms;
    for (int j = 0; j < kNumFeet; ++j) arms[j] = meas.feet.positions[j] - meas.body.position;
    const InputVector u_bar = feedforward_input(adapt_.theta_hat, stance, cfg_);
    const OperatingPoint op = OperatingPoint::make(meas.body.rotation, meas.body.omega, u_bar, arms,
                                                   stance, x0.segment<3>(state_index::kAtt));
    const HStack stack = build_h_stack(op, cfg_.sample_time, cfg_.gravity_vector());
    Command world = cmd;
    world.v_des = rot_z(yaw) * cmd.v_des;
    const Eigen::MatrixXd ref = build_reference(world, cfg_.horizon, cfg_.sample_time, nominal_height_);

    std::optional<Eigen::VectorXd> warm;
    if (last_ && last_->optimal() && last_stance_ == stance) warm = shifted(*last_);
    MpcSolution sol = solver_.solve(x0, adapt_.theta_hat, stack, schedule, ref, cfg_, warm);

    out.status = sol.status;
    out.iterations = sol.diagnostics.iterations;
    out.active_constraints = sol.diagnostics.active_constraints;
    out.solve_time = sol.diagnostics.solve_time;
    if (sol.optimal()) {
      out.u0 = sol.u0;
      last_ = sol;
      last_stance_ = stance;
      fallback_step_ = 1;
    } else {
      out.fallback = true;
      out.u0 = fallback_input(stance);
    }

    const Eigen::MatrixXd gamma = build_gamma(make_regressor(x0, out.u0), stack);
    out.stability = spectral_check(gamma, cfg_.lambda);
    adapt_.gamma_prev = gamma;
    out.x_next_predicted = gamma * adapt_.theta_hat;
    const auto est = extract_estimates(adapt_.theta_hat);
    out.mass_hat = est.mass_valid ? est.mass : std::numeric_limits<double>::quiet_NaN();

    prev_yaw_ = yaw;
    prev_anchor_ = anchor;
    has_frame_ = true;
    return out;
  }

 private:
  Eigen::VectorXd shifted(const MpcSolution& s) const {
    Eigen::VectorXd w = s.decision;
    const int n_h = cfg_.horizon;
    if (n_h < 2 || w.size() == 0) return w;
    const int block = static_cast<int>(w.size()) / n_h;
    Eigen::VectorXd out(w.size());
    out.head(block * (n_h - 1)) = w.segment(block, block * (n_h - 1));
    out.tail(block) = w.tail(block);
    return out;
  }

  // Next block of the last good plan; feet that changed contact state take
  // zero (swing) or the support force (new stance).
  InputVector fallback_input(const StanceFlags& stance) {
    const InputVector ff = feedforward_input(adapt_.theta_hat, stance, cfg_);
    if (!last_) return ff;
    const int row = std::min(fallback_step_, cfg_.horizon - 1);
    ++fallback_step_;
    InputVector u = last_->predicted_inputs.row(row).transpose();
    for (int j = 0; j < kNumFeet; ++j) {
      if (!stance[j]) {
        u.segment<3>(3 * j).setZero();
      } else if (!last_stance_[j]) {
        u.segment<3>(3 * j) = ff.segment<3>(3 * j);
      }
    }
    return u;
  }

  MpcConfig cfg_;
  double nominal_height_;
  AdaptiveState adapt_;
  MpcSolver solver_;
  std::optional<MpcSolution> last_;
  StanceFlags last_stance_{true, true, true, true};
  int fallback_step_ = 1;
  bool has_frame_ = false;
  double prev_yaw_ = 0.0;
  Vec3 prev_anchor_ = Vec3::Zero();
};

}  // namespace ampc
