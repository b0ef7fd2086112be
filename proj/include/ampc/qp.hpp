#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ampc::qp {

/// minimize 1/2 y^T H y + g^T y  subject to  lower <= C y <= upper.
/// Rows with lower == upper are equalities; infinite sides are ignored.
struct QpProblem {
  Eigen::MatrixXd hessian;
  Eigen::VectorXd linear;
  Eigen::MatrixXd constraints;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  int dim() const { return static_cast<int>(linear.size()); }
  int num_constraints() const { return static_cast<int>(constraints.rows()); }

  void validate() const {
    const int d = dim();
    if (hessian.rows() != d || hessian.cols() != d) {
      throw std::invalid_argument("QpProblem: hessian shape");
    }
    if (constraints.cols() != d && constraints.rows() > 0) {
      throw std::invalid_argument("QpProblem: constraint matrix shape");
    }
    if (lower.size() != constraints.rows() || upper.size() != constraints.rows()) {
      throw std::invalid_argument("QpProblem: bound vector size");
    }
    if (!hessian.allFinite() || !linear.allFinite() || !constraints.allFinite()) {
      throw std::invalid_argument("QpProblem: non-finite data");
    }
    const double scale = std::max(1.0, hessian.cwiseAbs().maxCoeff());
    if ((hessian - hessian.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
      throw std::invalid_argument("QpProblem: hessian not symmetric");
    }
    for (int i = 0; i < lower.size(); ++i) {
      if (std::isnan(lower(i)) || std::isnan(upper(i)) || lower(i) > upper(i)) {
        throw std::invalid_argument("QpProblem: lower > upper at row " + std::to_string(i));
      }
    }
  }

  double objective(const Eigen::VectorXd& y) const {
    return 0.5 * y.dot(hessian * y) + linear.dot(y);
  }
};

enum class QpStatus { kOptimal, kInfeasible, kMaxIter };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::kOptimal: return "optimal";
    case QpStatus::kInfeasible: return "infeasible";
    case QpStatus::kMaxIter: return "max_iter";
  }
  return "unknown";
}

/// Scaled KKT residuals (each normalized by 1 + the magnitude of the terms
/// it compares).
struct KktResiduals {
  double stationarity = 0.0;
  double primal = 0.0;
  double complementarity = 0.0;

  double max() const { return std::max({stationarity, primal, complementarity}); }
};

struct QpSolution {
  Eigen::VectorXd y;
  QpStatus status = QpStatus::kInfeasible;
  KktResiduals kkt;
  int iterations = 0;
  double solve_time = 0.0;            // seconds, wall clock
  double objective = 0.0;
  Eigen::VectorXd multipliers;        // per row: >0 lower side active, <0 upper side
  int active_count = 0;
};

struct QpSettings {
  int max_iterations = 100;           // inequality add/drop steps
  double feasibility_tol = 1e-11;     // relative violation accepted as satisfied
};

/// Dual active-set method of Goldfarb and Idnani for strictly convex QPs.
/// Starts from the unconstrained minimizer and adds violated constraints one
/// at a time while keeping dual feasibility; primal infeasibility is detected
/// when no step can reduce a violation.
class QpSolver {
 public:
  explicit QpSolver(QpSettings settings = {}) : settings_(settings) {}

  const QpSettings& settings() const { return settings_; }

  QpSolution solve(const QpProblem& problem,
                   const std::optional<Eigen::VectorXd>& warm_start = std::nullopt);

 private:
  // One-sided constraint n^T y >= b (or == b for equalities).
  struct Row {
    int source;       // row index in the original problem
    double sign;      // +1 lower side, -1 upper side
    double bound;
    bool equality;
  };

  void setup(const QpProblem& p);
  double slack(int i) const { return sign_[i] * c_->row(rows_[i].source).dot(y_) - rows_[i].bound; }
  double scale(int i) const;
  Eigen::VectorXd normal(int i) const { return sign_[i] * c_->row(rows_[i].source).transpose(); }
  void compute_step(const Eigen::VectorXd& np);
  bool add_constraint();
  void delete_constraint(int id);
  void reset_factorization();
  KktResiduals residuals(const QpProblem& p) const;

  QpSettings settings_;
  const Eigen::MatrixXd* c_ = nullptr;
  std::vector<Row> rows_;
  std::vector<double> sign_;
  int n_eq_ = 0;

  int n_ = 0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd j_;      // L^{-T} rotated so its leading columns span the active normals
  Eigen::MatrixXd r_;      // upper triangular factor of the active set
  Eigen::VectorXd y_, u_, d_, z_, rv_;
  std::vector<int> active_;
  int iq_ = 0;
  double r_norm_ = 1.0;
};

inline void QpSolver::setup(const QpProblem& p) {
  c_ = &p.constraints;
  rows_.clear();
  sign_.clear();
  const int k = p.num_constraints();
  // Equalities first so they occupy the leading active positions.
  for (int i = 0; i < k; ++i) {
    if (p.lower(i) == p.upper(i)) rows_.push_back({i, 1.0, p.lower(i), true});
  }
  n_eq_ = static_cast<int>(rows_.size());
  for (int i = 0; i < k; ++i) {
    if (p.lower(i) == p.upper(i)) continue;
    if (std::isfinite(p.lower(i))) rows_.push_back({i, 1.0, p.lower(i), false});
    if (std::isfinite(p.upper(i))) rows_.push_back({i, -1.0, -p.upper(i), false});
  }
  for (const auto& r : rows_) sign_.push_back(r.sign);
}

inline double QpSolver::scale(int i) const {
  return 1.0 + std::abs(rows_[i].bound) +
         c_->row(rows_[i].source).cwiseAbs().maxCoeff() * y_.cwiseAbs().maxCoeff();
}

inline void QpSolver::reset_factorization() {
  j_ = llt_.matrixU().solve(Eigen::MatrixXd::Identity(n_, n_));
  r_.setZero(n_, n_);
  iq_ = 0;
  r_norm_ = 1.0;
}

inline void QpSolver::compute_step(const Eigen::VectorXd& np) {
  d_.noalias() = j_.transpose() * np;
  z_.noalias() = j_.rightCols(n_ - iq_) * d_.tail(n_ - iq_);
  if (iq_ > 0) {
    rv_.head(iq_) = r_.topLeftCorner(iq_, iq_).triangularView<Eigen::Upper>().solve(d_.head(iq_));
  }
}

inline bool QpSolver::add_constraint() {
  // Givens rotations zero d(iq+1..n-1); the same rotations are applied to J.
  for (int j = n_ - 1; j >= iq_ + 1; --j) {
    double cc = d_(j - 1);
    double ss = d_(j);
    const double h = std::hypot(cc, ss);
    if (h == 0.0) continue;
    d_(j) = 0.0;
    ss /= h;
    cc /= h;
    if (cc < 0.0) {
      cc = -cc;
      ss = -ss;
      d_(j - 1) = -h;
    } else {
      d_(j - 1) = h;
    }
    const double xny = ss / (1.0 + cc);
    for (int k = 0; k < n_; ++k) {
      const double t1 = j_(k, j - 1);
      const double t2 = j_(k, j);
      j_(k, j - 1) = t1 * cc + t2 * ss;
      j_(k, j) = xny * (t1 + j_(k, j - 1)) - t2;
    }
  }
  ++iq_;
  r_.col(iq_ - 1).head(iq_) = d_.head(iq_);
  if (std::abs(d_(iq_ - 1)) <= std::numeric_limits<double>::epsilon() * r_norm_) {
    return false;
  }
  r_norm_ = std::max(r_norm_, std::abs(d_(iq_ - 1)));
  return true;
}

inline void QpSolver::delete_constraint(int id) {
  int qq = -1;
  for (int i = n_eq_; i < iq_; ++i) {
    if (active_[i] == id) {
      qq = i;
      break;
    }
  }
  if (qq < 0) throw std::logic_error("QpSolver: constraint to drop is not active");

  for (int i = qq; i < iq_ - 1; ++i) {
    active_[i] = active_[i + 1];
    u_(i) = u_(i + 1);
    r_.col(i) = r_.col(i + 1);
  }
  active_[iq_ - 1] = active_[iq_];
  u_(iq_ - 1) = u_(iq_);
  active_[iq_] = 0;
  u_(iq_) = 0.0;
  r_.col(iq_ - 1).head(iq_).setZero();
  --iq_;
  if (iq_ == 0) return;

  for (int j = qq; j < iq_; ++j) {
    double cc = r_(j, j);
    double ss = r_(j + 1, j);
    const double h = std::hypot(cc, ss);
    if (h == 0.0) continue;
    cc /= h;
    ss /= h;
    r_(j + 1, j) = 0.0;
    if (cc < 0.0) {
      r_(j, j) = -h;
      cc = -cc;
      ss = -ss;
    } else {
      r_(j, j) = h;
    }
    const double xny = ss / (1.0 + cc);
    for (int k = j + 1; k < iq_; ++k) {
      const double t1 = r_(j, k);
      const double t2 = r_(j + 1, k);
      r_(j, k) = t1 * cc + t2 * ss;
      r_(j + 1, k) = xny * (t1 + r_(j, k)) - t2;
    }
    for (int k = 0; k < n_; ++k) {
      const double t1 = j_(k, j);
      const double t2 = j_(k, j + 1);
      j_(k, j) = t1 * cc + t2 * ss;
      j_(k, j + 1) = xny * (j_(k, j) + t1) - t2;
    }
  }
}

inline KktResiduals QpSolver::residuals(const QpProblem& p) const {
  KktResiduals res;
  const Eigen::VectorXd hy = p.hessian * y_;
  Eigen::VectorXd dual_force = Eigen::VectorXd::Zero(n_);
  for (int k = 0; k < iq_; ++k) dual_force += u_(k) * normal(active_[k]);
  const double stat_scale =
      1.0 + std::max({hy.cwiseAbs().maxCoeff(), p.linear.cwiseAbs().maxCoeff(),
                      dual_force.cwiseAbs().maxCoeff()});
  res.stationarity = (hy + p.linear - dual_force).cwiseAbs().maxCoeff() / stat_scale;

  std::vector<double> mult(rows_.size(), 0.0);
  for (int k = 0; k < iq_; ++k) mult[active_[k]] = u_(k);
  for (int i = 0; i < static_cast<int>(rows_.size()); ++i) {
    const double s = slack(i);
    const double sc = scale(i);
    if (rows_[i].equality) {
      res.primal = std::max(res.primal, std::abs(s) / sc);
    } else {
      res.primal = std::max(res.primal, std::max(0.0, -s) / sc);
      const double lam_scale = 1.0 + std::abs(mult[i]);
      res.complementarity = std::max(res.complementarity, std::abs(mult[i] * s) / (sc * lam_scale));
      res.complementarity = std::max(res.complementarity, std::max(0.0, -mult[i]) / stat_scale);
    }
  }
  return res;
}

inline QpSolution QpSolver::solve(const QpProblem& problem,
                                  const std::optional<Eigen::VectorXd>& warm_start) {
  const auto t_start = std::chrono::steady_clock::now();
  problem.validate();
  n_ = problem.dim();
  QpSolution sol;

  llt_.compute(problem.hessian);
  if (llt_.info() != Eigen::Success) {
    throw std::invalid_argument("QpProblem: hessian is not positive definite");
  }
  const Eigen::VectorXd diag = llt_.matrixLLT().diagonal();
  if (!(diag.minCoeff() > 0.0) || diag.minCoeff() < 1e-12 * diag.maxCoeff()) {
    throw std::invalid_argument("QpProblem: hessian is not positive definite");
  }

  setup(problem);
  const int m = static_cast<int>(rows_.size());
  reset_factorization();
  y_ = -llt_.solve(problem.linear);
  u_.setZero(n_ + 1);
  d_.setZero(n_);
  z_.setZero(n_);
  rv_.setZero(n_ + 1);
  active_.assign(n_ + 1, 0);

  auto finish = [&](QpStatus status) {
    sol.y = y_;
    sol.status = status;
    sol.objective = problem.objective(y_);
    sol.kkt = residuals(problem);
    sol.multipliers = Eigen::VectorXd::Zero(problem.num_constraints());
    for (int k = 0; k < iq_; ++k) {
      const Row& r = rows_[active_[k]];
      sol.multipliers(r.source) += r.sign * u_(k);
    }
    sol.active_count = iq_;
    sol.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return sol;
  };

  // Equality constraints.
  for (int i = 0; i < n_eq_; ++i) {
    const Eigen::VectorXd np = normal(i);
    compute_step(np);
    double t2 = 0.0;
    if (d_.tail(n_ - iq_).norm() > 1e-12 * d_.norm()) t2 = -slack(i) / z_.dot(np);
    y_ += t2 * z_;
    u_(iq_) = t2;
    if (iq_ > 0) u_.head(iq_) -= t2 * rv_.head(iq_);
    active_[iq_] = i;
    if (!add_constraint()) {
      if (std::abs(slack(i)) <= 1e-9 * scale(i)) {
        // Redundant but consistent: pop it again.
        --iq_;
        r_.col(iq_).setZero();
        u_(iq_) = 0.0;
        continue;
      }
      return finish(QpStatus::kInfeasible);
    }
  }

  std::vector<char> inactive(m, 1), excluded(m, 0), preferred(m, 0);
  for (int k = 0; k < iq_; ++k) inactive[active_[k]] = 0;
  if (warm_start && warm_start->size() == n_) {
    const Eigen::VectorXd saved = y_;
    y_ = *warm_start;
    for (int i = n_eq_; i < m; ++i) preferred[i] = std::abs(slack(i)) <= 1e-9 * scale(i);
    y_ = saved;
  }

  std::vector<double> s(m, 0.0);
  int iterations = 0;
  while (true) {
    // Step 1: pick the most violated inactive inequality.
    for (int i = n_eq_; i < m; ++i) {
      s[i] = slack(i);
      excluded[i] = 0;
    }
    Eigen::VectorXd u_old = u_;
    std::vector<int> active_old = active_;
    int iq_old = iq_;
    Eigen::VectorXd y_old = y_;

  select:
    int ip = -1;
    {
      double worst = 0.0;
      for (int pass = 0; pass < 2 && ip < 0; ++pass) {
        for (int i = n_eq_; i < m; ++i) {
          if (!inactive[i] || excluded[i]) continue;
          if (pass == 0 && !preferred[i]) continue;
          const double v = s[i] / scale(i);
          if (v < -settings_.feasibility_tol && v < worst) {
            worst = v;
            ip = i;
          }
        }
      }
    }
    if (ip < 0) return finish(QpStatus::kOptimal);

    const Eigen::VectorXd np = normal(ip);
    u_(iq_) = 0.0;
    active_[iq_] = ip;

    // Step 2: move along the primal/dual directions until ip is satisfied.
    while (true) {
      if (++iterations > settings_.max_iterations) {
        sol.iterations = iterations - 1;
        return finish(QpStatus::kMaxIter);
      }
      sol.iterations = iterations;
      compute_step(np);

      double t1 = std::numeric_limits<double>::infinity();
      int drop = -1;
      for (int k = n_eq_; k < iq_; ++k) {
        if (rv_(k) > 0.0 && u_(k) / rv_(k) < t1) {
          t1 = u_(k) / rv_(k);
          drop = active_[k];
        }
      }
      double t2 = std::numeric_limits<double>::infinity();
      if (d_.tail(n_ - iq_).norm() > 1e-12 * d_.norm()) t2 = -s[ip] / z_.dot(np);
      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) return finish(QpStatus::kInfeasible);

      if (!std::isfinite(t2)) {
        // Dual step only.
        if (iq_ > 0) u_.head(iq_) -= t * rv_.head(iq_);
        u_(iq_) += t;
        inactive[drop] = 1;
        delete_constraint(drop);
        continue;
      }

      y_ += t * z_;
      if (iq_ > 0) u_.head(iq_) -= t * rv_.head(iq_);
      u_(iq_) += t;

      if (t == t2) {
        if (!add_constraint()) {
          // Numerically dependent: rebuild the previous active set and skip ip.
          excluded[ip] = 1;
          y_ = y_old;
          u_ = u_old;
          active_ = active_old;
          reset_factorization();
          std::fill(inactive.begin(), inactive.end(), 1);
          const std::vector<int> to_add(active_old.begin(), active_old.begin() + iq_old);
          for (int id : to_add) {
            compute_step(normal(id));
            add_constraint();
            inactive[id] = 0;
          }
          active_ = active_old;
          u_ = u_old;
          goto select;
        }
        inactive[ip] = 0;
        break;
      }

      // Partial step: drop the blocking constraint and continue with ip.
      inactive[drop] = 1;
      delete_constraint(drop);
      s[ip] = slack(ip);
    }
  }
}

inline QpSolution solve(const QpProblem& problem,
                        const std::optional<Eigen::VectorXd>& warm_start = std::nullopt,
                        QpSettings settings = {}) {
  QpSolver solver(settings);
  return solver.solve(problem, warm_start);
}

}  // namespace ampc::qp
