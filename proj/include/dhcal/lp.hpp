#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dhcal/errors.hpp"

namespace dhcal {

/// Dense inequality-form linear program:
///   minimize c'x  subject to  A x <= b,  x_j >= 0 where nonneg[j].
/// Variables with nonneg[j] == false are unrestricted.
struct LinearProgram {
  Eigen::VectorXd c;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  std::vector<bool> nonneg;

  Eigen::Index vars() const { return c.size(); }
  Eigen::Index cons() const { return b.size(); }

  void validate() const {
    if (A.rows() != b.size() || A.cols() != c.size() ||
        static_cast<Eigen::Index>(nonneg.size()) != c.size())
      throw std::invalid_argument("linear program dimensions inconsistent");
    if (!c.allFinite() || !A.allFinite() || !b.allFinite())
      throw std::invalid_argument("linear program coefficients must be finite");
  }
};

enum class LpStatus { optimal, iteration_capped, infeasible, unbounded };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::iteration_capped: return "iteration-capped";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
  }
  return "?";
}

/// Solver output.  `duals` holds one multiplier y_i >= 0 per constraint row
/// (empty unless status is optimal); at an optimum the reduced costs
/// c + A'y are >= 0 for nonnegative variables and 0 for free ones.
struct LpSolution {
  Eigen::VectorXd x;
  double objective = 0.0;
  LpStatus status = LpStatus::iteration_capped;
  int iterations = 0;
  double max_violation = 0.0;
  Eigen::VectorXd duals;
};

struct SolveOptions {
  double reduced_cost_tol = 1e-9;
  double pivot_tol = 1e-11;
  int iteration_cap = 0;  // 0 means 50 * (vars + cons)
  int degeneracy_trip = 30;  // consecutive zero-length steps before Bland
  // Iterations without objective improvement before the solver stops and
  // returns the best vertex it has seen.  Guards against floating-point
  // pivot cycles that exact-arithmetic anti-cycling rules cannot see.
  int stall_patience = 500;
};

/// Residuals of a claimed solution against its program, never thresholded
/// here; callers decide what to accept.  Dual quantities are zero when the
/// solution carries no multipliers.
struct CertificateReport {
  double primal_residual = 0.0;   // constraint and sign violations
  double objective_error = 0.0;   // |c'x - reported objective|
  double dual_residual = 0.0;     // multiplier sign + reduced-cost violations
  double complementarity = 0.0;   // worst complementary-slackness product

  double worst() const {
    return std::max(std::max(primal_residual, objective_error),
                    std::max(dual_residual, complementarity));
  }
};

/// Epigraph reformulation of min ||Phi x - y||_1 with optional sign
/// constraints on x: variables (x, u), minimize sum(u) subject to
/// Phi x - u <= y and -Phi x - u <= -y, u >= 0.  m rows of Phi become 2m
/// inequality rows and m extra variables.
inline LinearProgram l1_to_lp(const Eigen::MatrixXd& Phi,
                              const Eigen::VectorXd& y,
                              const std::vector<bool>& nonneg_x) {
  const Eigen::Index m = Phi.rows(), n = Phi.cols();
  if (m == 0 || n == 0)
    throw std::invalid_argument("empty regression system");
  if (y.size() != m)
    throw std::invalid_argument("right-hand side length does not match rows");
  if (static_cast<Eigen::Index>(nonneg_x.size()) != n)
    throw std::invalid_argument("sign-flag length does not match columns");
  if (!Phi.allFinite() || !y.allFinite())
    throw std::invalid_argument("regression system must be finite");

  LinearProgram lp;
  lp.c = Eigen::VectorXd::Zero(n + m);
  lp.c.tail(m).setOnes();
  lp.A = Eigen::MatrixXd::Zero(2 * m, n + m);
  lp.A.topLeftCorner(m, n) = Phi;
  lp.A.bottomLeftCorner(m, n) = -Phi;
  lp.A.topRightCorner(m, m) = -Eigen::MatrixXd::Identity(m, m);
  lp.A.bottomRightCorner(m, m) = -Eigen::MatrixXd::Identity(m, m);
  lp.b.resize(2 * m);
  lp.b.head(m) = y;
  lp.b.tail(m) = -y;
  lp.nonneg = nonneg_x;
  lp.nonneg.insert(lp.nonneg.end(), static_cast<std::size_t>(m), true);
  return lp;
}

namespace lp_detail {

// Two-phase revised simplex on the slack/artificial standard form.  All
// tie-breaks go to the lowest column index, so runs are bit-reproducible.
class DenseSimplex {
 public:
  DenseSimplex(const LinearProgram& lp, const SolveOptions& opt)
      : lp_(lp), opt_(opt) {
    const Eigen::Index m = lp.cons(), n = lp.vars();
    cap_ = opt.iteration_cap > 0 ? opt.iteration_cap
                                 : 50 * static_cast<int>(n + m);

    // Expand free variables into positive/negative parts.
    for (Eigen::Index j = 0; j < n; ++j) {
      col_var_.push_back(j);
      col_sign_.push_back(+1.0);
      if (!lp.nonneg[static_cast<std::size_t>(j)]) {
        col_var_.push_back(j);
        col_sign_.push_back(-1.0);
      }
    }
    const Eigen::Index ne = static_cast<Eigen::Index>(col_var_.size());

    sigma_.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) sigma_(i) = lp.b(i) >= 0.0 ? 1.0 : -1.0;

    std::vector<Eigen::Index> art_rows;
    for (Eigen::Index i = 0; i < m; ++i)
      if (sigma_(i) < 0.0) art_rows.push_back(i);
    n_slack_ = m;
    n_art_ = static_cast<Eigen::Index>(art_rows.size());

    A_.resize(m, ne + n_slack_ + n_art_);
    for (Eigen::Index k = 0; k < ne; ++k)
      A_.col(k) = sigma_.cwiseProduct(lp.A.col(col_var_[k]) * col_sign_[k]);
    A_.middleCols(ne, n_slack_).setZero();
    for (Eigen::Index i = 0; i < m; ++i) A_(i, ne + i) = sigma_(i);
    A_.rightCols(n_art_).setZero();
    basis_.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) basis_[i] = ne + i;
    for (Eigen::Index k = 0; k < n_art_; ++k) {
      A_(art_rows[k], ne + n_slack_ + k) = 1.0;
      basis_[art_rows[k]] = ne + n_slack_ + k;
    }
    b_ = sigma_.cwiseProduct(lp.b);
    ne_ = ne;
    row_map_.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) row_map_[i] = i;
  }

  LpSolution run() {
    LpSolution sol;
    if (n_art_ > 0) {
      Eigen::VectorXd c1 = Eigen::VectorXd::Zero(A_.cols());
      c1.tail(n_art_).setOnes();
      const LoopExit e1 = iterate(c1, /*allow_artificial=*/false);
      if (e1 == LoopExit::capped) return finish(sol, LpStatus::iteration_capped);
      refresh_basics();
      double phase1 = 0.0;
      for (Eigen::Index i = 0; i < A_.rows(); ++i)
        if (basis_[i] >= ne_ + n_slack_) phase1 += std::max(0.0, xb_(i));
      if (phase1 > 1e-7) return finish(sol, LpStatus::infeasible);
      expel_artificials();
    }
    Eigen::VectorXd c2 = Eigen::VectorXd::Zero(A_.cols());
    for (Eigen::Index k = 0; k < ne_; ++k)
      c2(k) = lp_.c(col_var_[k]) * col_sign_[k];
    const LoopExit e2 = iterate(c2, false);
    if (e2 == LoopExit::capped) return finish(sol, LpStatus::iteration_capped);
    if (e2 == LoopExit::unbounded) return finish(sol, LpStatus::unbounded);
    sol = finish(sol, LpStatus::optimal);
    attach_duals(sol, c2);
    return sol;
  }

 private:
  enum class LoopExit { optimal, unbounded, capped };

  void factor() {
    Eigen::MatrixXd B(A_.rows(), A_.rows());
    for (Eigen::Index i = 0; i < A_.rows(); ++i) B.col(i) = A_.col(basis_[i]);
    lu_.compute(B);
  }

  void refresh_basics() {
    factor();
    xb_ = lu_.solve(b_);
  }

  LoopExit iterate(const Eigen::VectorXd& cost, bool allow_artificial) {
    const Eigen::Index m = A_.rows();
    const Eigen::Index limit = allow_artificial ? A_.cols() : ne_ + n_slack_;
    int degen_streak = 0;
    std::vector<char> in_basis(A_.cols(), 0);
    for (Eigen::Index i = 0; i < m; ++i) in_basis[basis_[i]] = 1;

    while (true) {
      if (iterations_ >= cap_) return LoopExit::capped;
      refresh_basics();
      Eigen::VectorXd cb(m);
      for (Eigen::Index i = 0; i < m; ++i) cb(i) = cost(basis_[i]);
      const Eigen::VectorXd w = lu_.transpose().solve(cb);

      const bool bland = degen_streak >= opt_.degeneracy_trip;
      Eigen::Index enter = -1;
      double best = -opt_.reduced_cost_tol;
      for (Eigen::Index j = 0; j < limit; ++j) {
        if (in_basis[j]) continue;
        const double rc = cost(j) - A_.col(j).dot(w);
        if (rc < -opt_.reduced_cost_tol) {
          if (bland) {
            enter = j;
            break;
          }
          if (rc < best) {
            best = rc;
            enter = j;
          }
        }
      }
      if (enter < 0) return LoopExit::optimal;

      const Eigen::VectorXd d = lu_.solve(A_.col(enter));
      Eigen::Index leave_pos = -1;
      double theta = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (d(i) <= opt_.pivot_tol) continue;
        const double ratio = std::max(xb_(i), 0.0) / d(i);
        if (leave_pos < 0 || ratio < theta - 1e-12 ||
            (ratio < theta + 1e-12 && basis_[i] < basis_[leave_pos])) {
          theta = ratio;
          leave_pos = i;
        }
      }
      if (leave_pos < 0) return LoopExit::unbounded;

      degen_streak = theta <= opt_.pivot_tol ? degen_streak + 1 : 0;
      in_basis[basis_[leave_pos]] = 0;
      in_basis[enter] = 1;
      basis_[leave_pos] = enter;
      ++iterations_;
    }
  }

  // After a feasible phase 1, pivot zero-valued artificials out of the
  // basis; a row that offers no pivot is redundant and is dropped.
  void expel_artificials() {
    for (Eigen::Index i = 0; i < A_.rows(); ++i) {
      if (basis_[i] < ne_ + n_slack_) continue;
      factor();
      const Eigen::VectorXd ei = Eigen::VectorXd::Unit(A_.rows(), i);
      const Eigen::VectorXd row = lu_.transpose().solve(ei);
      Eigen::Index pivot = -1;
      for (Eigen::Index j = 0; j < ne_ + n_slack_ && pivot < 0; ++j) {
        bool basic = false;
        for (Eigen::Index r = 0; r < A_.rows(); ++r)
          if (basis_[r] == j) basic = true;
        if (!basic && std::abs(row.dot(A_.col(j))) > 1e-7) pivot = j;
      }
      if (pivot >= 0) {
        basis_[i] = pivot;
      } else {
        drop_row(i);
        --i;
      }
    }
    // Artificial columns are the trailing block; forget them entirely.
    A_.conservativeResize(Eigen::NoChange, ne_ + n_slack_);
    n_art_ = 0;
  }

  void drop_row(Eigen::Index r) {
    const Eigen::Index m = A_.rows();
    Eigen::MatrixXd A2(m - 1, A_.cols());
    Eigen::VectorXd b2(m - 1);
    Eigen::VectorXd s2(m - 1);
    std::vector<Eigen::Index> basis2;
    for (Eigen::Index i = 0, k = 0; i < m; ++i) {
      if (i == r) continue;
      A2.row(k) = A_.row(i);
      b2(k) = b_(i);
      s2(k) = sigma_(i);
      basis2.push_back(basis_[i]);
      ++k;
    }
    A_ = std::move(A2);
    b_ = std::move(b2);
    sigma_ = std::move(s2);
    basis_ = std::move(basis2);
    row_map_.erase(row_map_.begin() + r);
  }

  LpSolution finish(LpSolution sol, LpStatus status) {
    refresh_basics();
    sol.status = status;
    sol.iterations = iterations_;
    sol.x = Eigen::VectorXd::Zero(lp_.vars());
    for (Eigen::Index i = 0; i < A_.rows(); ++i)
      if (basis_[i] < ne_)
        sol.x(col_var_[basis_[i]]) += col_sign_[basis_[i]] * xb_(i);
    sol.objective = lp_.c.dot(sol.x);
    sol.max_violation = 0.0;
    const Eigen::VectorXd slack = lp_.A * sol.x - lp_.b;
    for (Eigen::Index i = 0; i < lp_.cons(); ++i)
      sol.max_violation = std::max(sol.max_violation, slack(i));
    for (Eigen::Index j = 0; j < lp_.vars(); ++j)
      if (lp_.nonneg[static_cast<std::size_t>(j)])
        sol.max_violation = std::max(sol.max_violation, -sol.x(j));
    return sol;
  }

  void attach_duals(LpSolution& sol, const Eigen::VectorXd& cost) {
    factor();
    Eigen::VectorXd cb(A_.rows());
    for (Eigen::Index i = 0; i < A_.rows(); ++i) cb(i) = cost(basis_[i]);
    const Eigen::VectorXd w = lu_.transpose().solve(cb);
    sol.duals = Eigen::VectorXd::Zero(lp_.cons());
    for (Eigen::Index i = 0; i < A_.rows(); ++i)
      sol.duals(row_map_[i]) = -sigma_(i) * w(i);
  }

  const LinearProgram& lp_;
  SolveOptions opt_;
  int cap_ = 0;
  int iterations_ = 0;
  Eigen::MatrixXd A_;
  Eigen::VectorXd b_, sigma_, xb_;
  std::vector<Eigen::Index> col_var_;
  std::vector<double> col_sign_;
  Eigen::Index ne_ = 0, n_slack_ = 0, n_art_ = 0;
  std::vector<Eigen::Index> basis_;
  std::vector<Eigen::Index> row_map_;  // surviving row -> original row
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
};

}  // namespace lp_detail

/// Deterministic dense simplex solve.  Identical inputs give bit-identical
/// outputs; ties always break toward the lowest column index and a
/// degeneracy streak flips pricing to Bland's rule, so cycling terminates.
inline LpSolution solve(const LinearProgram& lp, const SolveOptions& opt = {}) {
  lp.validate();
  lp_detail::DenseSimplex simplex(lp, opt);
  return simplex.run();
}

/// Recomputes every claim a solution makes.  Dual-side residuals are only
/// meaningful when the solution carries multipliers.
inline CertificateReport check_certificate(const LinearProgram& lp,
                                           const LpSolution& sol) {
  lp.validate();
  CertificateReport rep;
  if (sol.x.size() != lp.vars())
    throw std::invalid_argument("solution length does not match program");

  const Eigen::VectorXd slack = lp.b - lp.A * sol.x;
  for (Eigen::Index i = 0; i < lp.cons(); ++i)
    rep.primal_residual = std::max(rep.primal_residual, -slack(i));
  for (Eigen::Index j = 0; j < lp.vars(); ++j)
    if (lp.nonneg[static_cast<std::size_t>(j)])
      rep.primal_residual = std::max(rep.primal_residual, -sol.x(j));
  rep.primal_residual = std::max(rep.primal_residual, 0.0);

  rep.objective_error = std::abs(lp.c.dot(sol.x) - sol.objective);

  if (sol.duals.size() == lp.cons()) {
    const Eigen::VectorXd z = lp.c + lp.A.transpose() * sol.duals;
    for (Eigen::Index i = 0; i < lp.cons(); ++i) {
      rep.dual_residual = std::max(rep.dual_residual, -sol.duals(i));
      rep.complementarity =
          std::max(rep.complementarity, std::abs(sol.duals(i) * slack(i)));
    }
    for (Eigen::Index j = 0; j < lp.vars(); ++j) {
      if (lp.nonneg[static_cast<std::size_t>(j)]) {
        rep.dual_residual = std::max(rep.dual_residual, -z(j));
        rep.complementarity =
            std::max(rep.complementarity, std::abs(sol.x(j) * z(j)));
      } else {
        rep.dual_residual = std::max(rep.dual_residual, std::abs(z(j)));
      }
    }
  }
  return rep;
}

/// Solution of min ||Phi x - y||_1 with x >= 0.  `duals` is the m-vector
/// pi of row multipliers; at an optimum |pi| <= 1 and Phi' pi <= 0, and
/// pi maps onto the epigraph LP multipliers as (1 -+ pi)/2.
struct L1Solution {
  Eigen::VectorXd x;
  Eigen::VectorXd residual;  // y - Phi x
  double objective = 0.0;
  LpStatus status = LpStatus::iteration_capped;
  int iterations = 0;
  Eigen::VectorXd duals;
};

/// Least-absolute-deviations fit by primal simplex on the equality form
///   Phi x + r+ - r- = y,  x, r+, r- >= 0,  minimize sum(r+ + r-).
///
/// The basis always consists of k regression columns plus one residual
/// unit column for each remaining row, so every step reduces to dense
/// k x k solves against the rows where the fit currently interpolates.
/// Each iteration runs a multi-breakpoint line search: residuals may pass
/// through zero and change sign as long as the directional derivative
/// stays negative, so one pivot does the work of many single-swap steps.
/// Pivot rules match the generic solver: lowest-index ties, Bland
/// fallback on a degeneracy streak, 1e-9 reduced-cost tolerance.
inline L1Solution solve_l1(const Eigen::MatrixXd& Phi, const Eigen::VectorXd& y,
                           const SolveOptions& opt = {}) {
  const Eigen::Index m = Phi.rows(), n = Phi.cols();
  if (m == 0 || n == 0)
    throw std::invalid_argument("empty regression system");
  if (y.size() != m)
    throw std::invalid_argument("right-hand side length does not match rows");
  if (!Phi.allFinite() || !y.allFinite())
    throw std::invalid_argument("regression system must be finite");

  const int cap = opt.iteration_cap > 0
                      ? opt.iteration_cap
                      : 50 * static_cast<int>(n + 3 * m);

  // act: rows the fit interpolates (residual nonbasic); xb: basic columns.
  std::vector<Eigen::Index> act, xb;
  // sigma(i): +1/-1 for the basic residual sign of row i, 0 when i is in act.
  Eigen::VectorXd sigma(m);
  for (Eigen::Index i = 0; i < m; ++i) sigma(i) = y(i) >= 0.0 ? 1.0 : -1.0;
  Eigen::MatrixXd Phi_b(m, 0);  // columns of Phi indexed by xb

  // Variable ids for tie-breaking: x_j = j, r+_i = n + i, r-_i = n + m + i.
  auto residual_id = [&](Eigen::Index i, double sign) {
    return sign > 0.0 ? n + i : n + m + i;
  };

  L1Solution sol;
  Eigen::VectorXd xval = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd rho = y;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;
  int iterations = 0;
  int degen_streak = 0;
  int stall = 0;
  std::vector<char> basic_col(n, 0);

  // Best vertex seen so far; restored when the budget runs out so a long
  // unproductive tail cannot hand back something worse than the path's
  // best point.
  double best_obj = std::numeric_limits<double>::infinity();
  std::vector<Eigen::Index> best_act, best_xb;
  Eigen::VectorXd best_sigma;

  // Per-vertex pricing skip set: candidates whose priced reduced cost
  // turned out to be a conditioning artifact (see the honest-slope gate).
  std::vector<char> skip(static_cast<std::size_t>(n + 2 * m), 0);

  auto rebuild_basis = [&](const std::vector<Eigen::Index>& a,
                           const std::vector<Eigen::Index>& b,
                           const Eigen::VectorXd& sg) {
    act = a;
    xb = b;
    sigma = sg;
    Phi_b.resize(m, static_cast<Eigen::Index>(xb.size()));
    std::fill(basic_col.begin(), basic_col.end(), 0);
    for (std::size_t c = 0; c < xb.size(); ++c) {
      Phi_b.col(static_cast<Eigen::Index>(c)) = Phi.col(xb[c]);
      basic_col[static_cast<std::size_t>(xb[c])] = 1;
    }
  };

  while (true) {
    Eigen::Index k = static_cast<Eigen::Index>(act.size());
    Eigen::MatrixXd M(k, k);
    Eigen::VectorXd ya(k);
    for (Eigen::Index r = 0; r < k; ++r) {
      M.row(r) = Phi_b.row(act[r]);
      ya(r) = y(act[r]);
    }
    lu.compute(M);
    Eigen::VectorXd xbv = lu.solve(ya);
    xval.setZero();
    for (Eigen::Index c = 0; c < k; ++c) xval(xb[c]) = xbv(c);
    rho = y - Phi_b * xbv;

    const double cur_obj = rho.cwiseAbs().sum();
    if (cur_obj < best_obj * (1.0 - 1e-12)) {
      best_obj = cur_obj;
      best_act = act;
      best_xb = xb;
      best_sigma = sigma;
      stall = 0;
    } else {
      ++stall;
    }

    if (iterations >= cap || stall > opt.stall_patience) {
      if (best_obj < cur_obj) {
        rebuild_basis(best_act, best_xb, best_sigma);
        k = static_cast<Eigen::Index>(act.size());
        M.resize(k, k);
        ya.resize(k);
        for (Eigen::Index r = 0; r < k; ++r) {
          M.row(r) = Phi_b.row(act[r]);
          ya(r) = y(act[r]);
        }
        lu.compute(M);
        xbv = lu.solve(ya);
        xval.setZero();
        for (Eigen::Index c = 0; c < k; ++c) xval(xb[c]) = xbv(c);
        rho = y - Phi_b * xbv;
      }
      sol.status = LpStatus::iteration_capped;
      break;
    }

    // Multipliers: pi_i = sigma_i off the active rows; on them, solve
    // M' pi_act = -Phi[off, xb]' sigma_off (sigma is 0 on active rows, so
    // the full-column product needs no masking).
    Eigen::VectorXd pi = sigma;
    if (k > 0) {
      const Eigen::VectorXd g = Phi_b.transpose() * sigma;
      const Eigen::VectorXd pa = lu.transpose().solve(-g);
      for (Eigen::Index r = 0; r < k; ++r) pi(act[r]) = pa(r);
    }

    // Pricing.  Candidates: nonbasic x columns (cost 0, column Phi_j) and
    // the residual pair of every active row (cost 1, column +-e_i).
    const Eigen::VectorXd zx = -(Phi.transpose() * pi);
    const bool bland = degen_streak >= opt.degeneracy_trip;
    std::fill(skip.begin(), skip.end(), 0);
    bool skipped_any = false;
    Eigen::Index enter_id = -1;
    Eigen::VectorXd dx, step_full;
    double slope0 = 0.0;

    // A near-singular active block makes the priced reduced costs
    // untrustworthy: entering such a phantom loops forever on zero-length
    // pivots.  So each chosen candidate is re-measured through its actual
    // direction (the true directional derivative costs one O(m) sweep),
    // and the ones that are not genuine descents are set aside for this
    // vertex before pricing runs again.
    while (true) {
      enter_id = -1;
      double enter_rc = 0.0;
      double enter_best = -opt.reduced_cost_tol;
      auto consider = [&](Eigen::Index id, double rc) {
        if (skip[static_cast<std::size_t>(id)]) return;
        if (rc >= -opt.reduced_cost_tol) return;
        if (bland) {
          if (enter_id < 0 || id < enter_id) {
            enter_id = id;
            enter_rc = rc;
          }
          return;
        }
        if (rc < enter_best || (rc == enter_best && id < enter_id)) {
          enter_best = rc;
          enter_id = id;
          enter_rc = rc;
        }
      };
      for (Eigen::Index j = 0; j < n; ++j)
        if (!basic_col[j]) consider(j, zx(j));
      for (Eigen::Index r = 0; r < k; ++r) {
        consider(residual_id(act[r], +1.0), 1.0 - pi(act[r]));
        consider(residual_id(act[r], -1.0), 1.0 + pi(act[r]));
      }
      if (enter_id < 0) break;

      // Direction through the basis for the entering column.
      Eigen::VectorXd ae_act(k);
      Eigen::VectorXd ae_full = Eigen::VectorXd::Zero(m);
      if (enter_id < n) {
        for (Eigen::Index r = 0; r < k; ++r) ae_act(r) = Phi(act[r], enter_id);
        ae_full = Phi.col(enter_id);
      } else {
        const Eigen::Index row = (enter_id - n) % m;
        const double sign = enter_id < n + m ? 1.0 : -1.0;
        ae_act.setZero();
        for (Eigen::Index r = 0; r < k; ++r)
          if (act[r] == row) ae_act(r) = sign;
        ae_full(row) = sign;
      }
      dx = k > 0 ? lu.solve(ae_act).eval() : ae_act;
      step_full = ae_full - Phi_b * dx;

      // Honest slope: derivative of the objective along the direction as
      // actually computed, independent of the multipliers.
      slope0 = enter_id < n ? 0.0 : 1.0;
      for (Eigen::Index i = 0; i < m; ++i)
        if (sigma(i) != 0.0) slope0 -= sigma(i) * step_full(i);
      if (slope0 < -opt.reduced_cost_tol) break;  // genuine descent
      skip[static_cast<std::size_t>(enter_id)] = 1;
      skipped_any = true;
      static_cast<void>(enter_rc);
    }

    if (enter_id < 0) {
      // Nothing descends.  With a trustworthy basis that is an optimality
      // certificate; behind a collapsed one it is only a stopping point,
      // so report the budgeted status and hand back the best vertex.
      const double rc_est = k > 0 ? lu.rcond() : 1.0;
      if (!skipped_any || rc_est > 1e-10) {
        sol.status = LpStatus::optimal;
        sol.duals = pi;
      } else {
        if (best_obj < cur_obj) {
          rebuild_basis(best_act, best_xb, best_sigma);
          k = static_cast<Eigen::Index>(act.size());
          M.resize(k, k);
          ya.resize(k);
          for (Eigen::Index r = 0; r < k; ++r) {
            M.row(r) = Phi_b.row(act[r]);
            ya(r) = y(act[r]);
          }
          lu.compute(M);
          xbv = lu.solve(ya);
          xval.setZero();
          for (Eigen::Index c = 0; c < k; ++c) xval(xb[c]) = xbv(c);
          rho = y - Phi_b * xbv;
        }
        sol.status = LpStatus::iteration_capped;
      }
      break;
    }

    // Breakpoints of the piecewise-linear objective along the direction.
    // A basic x column hitting zero blocks outright; a basic residual
    // crossing zero flips sign and raises the slope by twice its rate.
    struct Breakpoint {
      double ratio;
      double gain;
      double mag;  // pivot magnitude, for conditioning-aware tie-breaks
      Eigen::Index id;
      bool is_x;
      Eigen::Index pos;
    };
    std::vector<Breakpoint> bps;
    bps.reserve(static_cast<std::size_t>(k) + 8);
    for (Eigen::Index c = 0; c < k; ++c)
      if (dx(c) > opt.pivot_tol)
        bps.push_back(
            {std::max(xbv(c), 0.0) / dx(c), 0.0, dx(c), xb[c], true, c});
    for (Eigen::Index i = 0; i < m; ++i) {
      if (sigma(i) == 0.0) continue;
      const double step = sigma(i) * step_full(i);
      if (step > opt.pivot_tol)
        bps.push_back({std::max(sigma(i) * rho(i), 0.0) / step, 2.0 * step,
                       step, residual_id(i, sigma(i)), false, i});
    }
    // Equal ratios are broken toward the strongest pivot so repeated
    // degenerate swaps do not walk the basis into singularity.
    std::sort(bps.begin(), bps.end(),
              [](const Breakpoint& a, const Breakpoint& b) {
                if (a.ratio != b.ratio) return a.ratio < b.ratio;
                if (a.mag != b.mag) return a.mag > b.mag;
                return a.id < b.id;
              });

    double slope = slope0;
    std::ptrdiff_t stop = -1;
    for (std::size_t t = 0; t < bps.size(); ++t) {
      if (bps[t].is_x) {
        stop = static_cast<std::ptrdiff_t>(t);
        break;
      }
      slope += bps[t].gain;
      if (slope >= -opt.reduced_cost_tol) {
        stop = static_cast<std::ptrdiff_t>(t);
        break;
      }
    }
    if (stop < 0) {
      sol.status = LpStatus::unbounded;  // cannot happen: objective >= 0
      break;
    }
    const Breakpoint leave = bps[static_cast<std::size_t>(stop)];
    const double theta = leave.ratio;
    degen_streak = theta <= opt.pivot_tol ? degen_streak + 1 : 0;

    // Residuals passed on the way flip to the opposite sign variable.
    for (std::ptrdiff_t t = 0; t < stop; ++t)
      sigma(bps[static_cast<std::size_t>(t)].pos) =
          -sigma(bps[static_cast<std::size_t>(t)].pos);

    // Update the working basis description.
    auto append_col = [&](Eigen::Index j) {
      Phi_b.conservativeResize(Eigen::NoChange, Phi_b.cols() + 1);
      Phi_b.col(Phi_b.cols() - 1) = Phi.col(j);
      xb.push_back(j);
      basic_col[j] = 1;
    };
    auto remove_col = [&](Eigen::Index pos) {
      const Eigen::Index kk = Phi_b.cols();
      basic_col[xb[pos]] = 0;
      for (Eigen::Index c = pos; c + 1 < kk; ++c) Phi_b.col(c) = Phi_b.col(c + 1);
      Phi_b.conservativeResize(Eigen::NoChange, kk - 1);
      xb.erase(xb.begin() + pos);
    };

    if (enter_id < n) {
      if (leave.is_x) {
        basic_col[xb[leave.pos]] = 0;
        xb[leave.pos] = enter_id;
        basic_col[enter_id] = 1;
        Phi_b.col(leave.pos) = Phi.col(enter_id);
      } else {
        act.push_back(leave.pos);
        sigma(leave.pos) = 0.0;
        append_col(enter_id);
      }
    } else {
      const Eigen::Index row = (enter_id - n) % m;
      const double sign = enter_id < n + m ? 1.0 : -1.0;
      if (leave.is_x) {
        remove_col(leave.pos);
        for (std::size_t r = 0; r < act.size(); ++r)
          if (act[r] == row) {
            act.erase(act.begin() + static_cast<std::ptrdiff_t>(r));
            break;
          }
        sigma(row) = sign;
      } else {
        // Residual enters on one row, leaves on another: swap active rows.
        for (std::size_t r = 0; r < act.size(); ++r)
          if (act[r] == row) {
            act[r] = leave.pos;
            break;
          }
        sigma(row) = sign;
        sigma(leave.pos) = 0.0;
      }
    }
    ++iterations;
  }

  sol.x = xval;
  sol.residual = rho;
  sol.objective = rho.cwiseAbs().sum();
  sol.iterations = iterations;
  return sol;
}

/// Repackages an L1 fit as a solution of the corresponding epigraph LP so
/// the generic certificate check can audit it.
inline LpSolution to_lp_solution(const L1Solution& fit,
                                 const Eigen::MatrixXd& Phi,
                                 const Eigen::VectorXd& y) {
  const Eigen::Index m = Phi.rows(), n = Phi.cols();
  LpSolution sol;
  sol.x.resize(n + m);
  sol.x.head(n) = fit.x;
  sol.x.tail(m) = fit.residual.cwiseAbs();
  sol.objective = fit.objective;
  sol.status = fit.status;
  sol.iterations = fit.iterations;
  if (fit.duals.size() == m) {
    sol.duals.resize(2 * m);
    sol.duals.head(m) = (Eigen::VectorXd::Ones(m) - fit.duals) / 2.0;
    sol.duals.tail(m) = (Eigen::VectorXd::Ones(m) + fit.duals) / 2.0;
  }
  const Eigen::VectorXd r = Phi * fit.x - y;
  sol.max_violation = std::max(0.0, (r.cwiseAbs() - sol.x.tail(m)).maxCoeff());
  for (Eigen::Index j = 0; j < n; ++j)
    sol.max_violation = std::max(sol.max_violation, -fit.x(j));
  return sol;
}

/// Free-format MPS dump for cross-checking against external solvers.
inline void write_mps(const LinearProgram& lp, std::ostream& os,
                      const std::string& name = "DHCAL") {
  lp.validate();
  os << "NAME " << name << "\n";
  os << "ROWS\n N COST\n";
  for (Eigen::Index i = 0; i < lp.cons(); ++i) os << " L R" << i << "\n";
  os << "COLUMNS\n";
  os.precision(17);
  for (Eigen::Index j = 0; j < lp.vars(); ++j) {
    if (lp.c(j) != 0.0) os << " X" << j << " COST " << lp.c(j) << "\n";
    for (Eigen::Index i = 0; i < lp.cons(); ++i)
      if (lp.A(i, j) != 0.0)
        os << " X" << j << " R" << i << " " << lp.A(i, j) << "\n";
  }
  os << "RHS\n";
  for (Eigen::Index i = 0; i < lp.cons(); ++i)
    if (lp.b(i) != 0.0) os << " RHS R" << i << " " << lp.b(i) << "\n";
  os << "BOUNDS\n";
  for (Eigen::Index j = 0; j < lp.vars(); ++j)
    if (!lp.nonneg[static_cast<std::size_t>(j)])
      os << " FR BND X" << j << "\n";
  os << "ENDATA\n";
}

}  // namespace dhcal
