// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ucmip/milp.hpp"

namespace ucmip {

enum class LpStatus { Optimal, Infeasible, Unbounded };

enum class BasisStatus : std::uint8_t { Lower, Basic, Upper, Zero };

struct BoundOverride {
  int col;
  double lower;
  double upper;
};

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  std::vector<double> x;
  double objective = kInf;
  std::vector<double> duals;
  std::vector<double> reduced_costs;
  std::vector<BasisStatus> basis;      // structural columns
  std::vector<BasisStatus> row_basis;  // row slacks
  long long iterations = 0;
};

// Two-phase bounded-variable primal simplex on min c'x, Ax + s = b,
// l <= x <= u, 0 <= s. Phase 1 minimizes the sum of bound violations of the
// basic variables with +-1 costs, so any warm basis is a legal start.
//
// The basis inverse is kept in kernel form: with S the structural basic
// columns and K the rows whose slack is nonbasic (|K| = |S| always), only
// Kinv = inverse(A[K,S]) is stored. FTRAN/BTRAN and all four pivot shapes
// (grow, shrink, column replace, row replace) are O(k^2) on that block, and
// slack-heavy bases stay cheap no matter how large m is.
//
// Pricing is Dantzig with a switch to Bland's rule after a run of degenerate
// steps, which restores the finiteness guarantee. Ties break toward the
// lowest variable index so runs are reproducible.
class SimplexSolver {
 public:
  struct Params {
    double feas_tol = 1e-7;
    double opt_tol = 1e-7;
    double pivot_tol = 1e-9;
    int refactor_interval = 400;
    int degenerate_limit = 60;
    long long max_iterations = 2000000;
  };

  explicit SimplexSolver(const MilpProblem& p) : SimplexSolver(p, Params{}) {}

  SimplexSolver(const MilpProblem& p, Params params)
      : prob_(&p), par_(params), n_(p.num_vars()), m_(p.num_rows()) {
    if (p.A->cols() != n_ || p.A->rows() != m_) throw ShapeError("SimplexSolver: bad problem shapes");
    cap_ = std::min(n_, m_);
    wl_.resize(n_ + m_);
    wu_.resize(n_ + m_);
    status_.assign(n_ + m_, BasisStatus::Lower);
    xval_.assign(n_ + m_, 0.0);
    pos_S_.assign(n_, -1);
    pos_K_.assign(m_, -1);
    slack_basic_.assign(m_, 0);
    Kinv_.assign(static_cast<std::size_t>(cap_) * cap_, 0.0);
    wS_.assign(cap_, 0.0);
    tmpk_.assign(cap_, 0.0);
    veck_.assign(cap_, 0.0);
    gbuf_.assign(cap_, 0.0);
    colbuf_.assign(cap_, 0.0);
    rhsS_.assign(cap_, 0.0);
    wslack_.assign(m_, 0.0);
    colvals_.assign(m_, 0.0);
    pi_.assign(m_, 0.0);
    rhs_.assign(m_, 0.0);
  }

  // Solves with the problem bounds tightened by `overrides`. When `warm` is
  // true and a previous solve left a basis, that basis is reused as-is; new
  // bounds only move the nonbasic values and phase 1 repairs the rest.
  LpSolution solve(const std::vector<BoundOverride>& overrides = {}, bool warm = true) {
    for (int j = 0; j < n_; ++j) {
      wl_[j] = prob_->l[j];
      wu_[j] = prob_->u[j];
    }
    for (int i = 0; i < m_; ++i) {
      wl_[n_ + i] = 0.0;
      wu_[n_ + i] = kInf;
    }
    for (const auto& ov : overrides) {
      if (ov.col < 0 || ov.col >= n_) throw ShapeError("solve: override column out of range");
      wl_[ov.col] = ov.lower;
      wu_[ov.col] = ov.upper;
    }
    LpSolution sol;
    sol.x.assign(n_, 0.0);
    sol.duals.assign(m_, 0.0);
    sol.reduced_costs.assign(n_, 0.0);
    sol.basis.assign(n_, BasisStatus::Lower);
    sol.row_basis.assign(m_, BasisStatus::Basic);
    for (int j = 0; j < n_; ++j) {
      if (wl_[j] > wu_[j]) {
        sol.status = LpStatus::Infeasible;
        finish_statuses(sol);
        return sol;
      }
    }

    if (!warm || !has_state_) {
      init_cold();
    } else {
      // Demote statuses whose bound no longer exists (possible only if the
      // caller relaxed a bound, which B&B never does but tests may).
      for (int v = 0; v < n_ + m_; ++v) {
        if (status_[v] == BasisStatus::Lower && wl_[v] == -kInf) {
          status_[v] = wu_[v] < kInf ? BasisStatus::Upper : BasisStatus::Zero;
        } else if (status_[v] == BasisStatus::Upper && wu_[v] == kInf) {
          status_[v] = wl_[v] > -kInf ? BasisStatus::Lower : BasisStatus::Zero;
        }
      }
    }
    set_nonbasic_values();
    recompute_x();

    long long iters = 0;
    int degen_run = 0;
    bool bland = false;
    int confirm_rounds = 0;

    while (true) {
      if (iters > par_.max_iterations) throw NumericalError("simplex: iteration limit exceeded");
      const bool phase2 = infeasibility_sum() == 0.0;

      int enter;
      double d_enter;
      price(phase2, bland, enter, d_enter);

      if (enter < 0) {
        // No improving candidate. Refresh the factorization once before
        // trusting the verdict; update drift can hide candidates.
        if (pivots_since_refactor_ > 0 && confirm_rounds < 3) {
          ++confirm_rounds;
          factorize();
          recompute_x();
          continue;
        }
        sol.iterations = iters;
        total_iters_ += iters;
        if (!phase2) {
          sol.status = LpStatus::Infeasible;
          finish_statuses(sol);
          return sol;
        }
        sol.status = LpStatus::Optimal;
        fill_solution(sol);
        has_state_ = true;
        return sol;
      }

      const int dir = enter_direction(enter, d_enter);
      ftran(enter);

      int leave = -1;
      double t = 0.0;
      BasisStatus leave_side = BasisStatus::Lower;
      ratio_test(enter, dir, bland, leave, t, leave_side);

      if (t == kInf) {
        sol.iterations = iters;
        total_iters_ += iters;
        if (!phase2) throw NumericalError("simplex: unbounded phase-1 direction");
        sol.status = LpStatus::Unbounded;
        sol.objective = -kInf;
        for (int j = 0; j < n_; ++j) sol.x[j] = xval_[j];
        finish_statuses(sol);
        has_state_ = true;
        return sol;
      }

      ++iters;
      confirm_rounds = 0;
      apply_step(enter, dir, t, leave, leave_side);

      if (t <= 1e-11) {
        if (++degen_run > par_.degenerate_limit) bland = true;
      } else {
        degen_run = 0;
        bland = false;
      }

      if (leave >= 0 && ++pivots_since_refactor_ >= par_.refactor_interval) {
        factorize();
        recompute_x();
      }
    }
  }

  void reset_basis() { has_state_ = false; }

  long long total_iterations() const { return total_iters_; }

 private:
  // --- basis bookkeeping -----------------------------------------------

  void init_cold() {
    S_.clear();
    K_.clear();
    std::fill(pos_S_.begin(), pos_S_.end(), -1);
    std::fill(pos_K_.begin(), pos_K_.end(), -1);
    k_ = 0;
    for (int j = 0; j < n_; ++j) {
      if (wl_[j] > -kInf) {
        status_[j] = BasisStatus::Lower;
      } else if (wu_[j] < kInf) {
        status_[j] = BasisStatus::Upper;
      } else {
        status_[j] = BasisStatus::Zero;
      }
    }
    for (int i = 0; i < m_; ++i) {
      slack_basic_[i] = 1;
      status_[n_ + i] = BasisStatus::Basic;
    }
    pivots_since_refactor_ = 0;
    has_state_ = true;
  }

  void set_nonbasic_values() {
    for (int v = 0; v < n_ + m_; ++v) {
      switch (status_[v]) {
        case BasisStatus::Lower: xval_[v] = wl_[v]; break;
        case BasisStatus::Upper: xval_[v] = wu_[v]; break;
        case BasisStatus::Zero: xval_[v] = 0.0; break;
        case BasisStatus::Basic: break;
      }
    }
  }

  // x_B = Binv (b - N x_N), expressed through the kernel block.
  void recompute_x() {
    const SparseMatrix& A = *prob_->A;
    for (int i = 0; i < m_; ++i) rhs_[i] = prob_->b[i];
    for (int j = 0; j < n_; ++j) {
      if (status_[j] == BasisStatus::Basic || xval_[j] == 0.0) continue;
      const double xj = xval_[j];
      for (int k = A.col_begin(j); k < A.col_end(j); ++k) rhs_[A.row_at(k)] -= A.cval_at(k) * xj;
    }
    for (int t = 0; t < k_; ++t) {
      const int row = K_[t];
      rhs_[row] -= xval_[n_ + row];
    }
    for (int t = 0; t < k_; ++t) tmpk_[t] = rhs_[K_[t]];
    for (int i = 0; i < k_; ++i) {
      const double* Ki = Kinv_.data() + static_cast<std::size_t>(i) * cap_;
      double s = 0.0;
      for (int t = 0; t < k_; ++t) s += Ki[t] * tmpk_[t];
      xval_[S_[i]] = s;
    }
    for (int row = 0; row < m_; ++row) {
      if (!slack_basic_[row]) continue;
      double s = rhs_[row];
      for (int k = A.row_begin(row); k < A.row_end(row); ++k) {
        const int ps = pos_S_[A.col_at(k)];
        if (ps >= 0) s -= A.val_at(k) * xval_[S_[ps]];
      }
      xval_[n_ + row] = s;
    }
  }

  // Counts only violations past p1_tol_, the same classification phase-1
  // costs use, so "sum == 0" and "all phase-1 costs zero" agree exactly.
  double infeasibility_sum() const {
    double s = 0.0;
    for (int i = 0; i < k_; ++i) {
      const int v = S_[i];
      if (xval_[v] < wl_[v] - p1_tol_) s += wl_[v] - xval_[v];
      if (xval_[v] > wu_[v] + p1_tol_) s += xval_[v] - wu_[v];
    }
    for (int row = 0; row < m_; ++row) {
      if (slack_basic_[row] && xval_[n_ + row] < -p1_tol_) s -= xval_[n_ + row];
    }
    return s;
  }

  double phase1_cost(int v) const {
    if (xval_[v] < wl_[v] - p1_tol_) return -1.0;
    if (xval_[v] > wu_[v] + p1_tol_) return 1.0;
    return 0.0;
  }

  // --- FTRAN / BTRAN ----------------------------------------------------

  // Solves B w = a_enter. wS_ holds the structural-basic part (indexed by
  // position in S), wslack_ the slack-basic part (indexed by row).
  void ftran(int enter) {
    const SparseMatrix& A = *prob_->A;
    for (int t = 0; t < k_; ++t) tmpk_[t] = 0.0;
    touched_.clear();
    if (enter < n_) {
      for (int k = A.col_begin(enter); k < A.col_end(enter); ++k) {
        const int row = A.row_at(k);
        const int pk = pos_K_[row];
        if (pk >= 0) tmpk_[pk] = A.cval_at(k);
        colvals_[row] = A.cval_at(k);
        touched_.push_back(row);
      }
      for (int i = 0; i < k_; ++i) {
        const double* Ki = Kinv_.data() + static_cast<std::size_t>(i) * cap_;
        double s = 0.0;
        for (int t = 0; t < k_; ++t) s += Ki[t] * tmpk_[t];
        wS_[i] = s;
      }
    } else {
      const int pr = pos_K_[enter - n_];
      for (int i = 0; i < k_; ++i) wS_[i] = Kinv_[static_cast<std::size_t>(i) * cap_ + pr];
    }
    for (int row = 0; row < m_; ++row) {
      if (!slack_basic_[row]) continue;
      double s = colvals_[row];
      for (int k = A.row_begin(row); k < A.row_end(row); ++k) {
        const int ps = pos_S_[A.col_at(k)];
        if (ps >= 0) s += -A.val_at(k) * wS_[ps];
      }
      wslack_[row] = s;
    }
    for (int row : touched_) colvals_[row] = 0.0;
  }

  // Solves B' pi = c_B for the active phase costs.
  void btran(bool phase2) {
    const SparseMatrix& A = *prob_->A;
    for (int i = 0; i < m_; ++i) pi_[i] = 0.0;
    if (!phase2) {
      for (int row = 0; row < m_; ++row) {
        if (slack_basic_[row]) pi_[row] = phase1_cost(n_ + row);
      }
    }
    for (int t = 0; t < k_; ++t) {
      const int col = S_[t];
      double s = phase2 ? prob_->c[col] : phase1_cost(col);
      for (int k = A.col_begin(col); k < A.col_end(col); ++k) {
        const int row = A.row_at(k);
        if (slack_basic_[row] && pi_[row] != 0.0) s -= A.cval_at(k) * pi_[row];
      }
      rhsS_[t] = s;
    }
    for (int j = 0; j < k_; ++j) {
      double s = 0.0;
      for (int t = 0; t < k_; ++t) s += Kinv_[static_cast<std::size_t>(t) * cap_ + j] * rhsS_[t];
      pi_[K_[j]] = s;
    }
  }

  // --- pricing and ratio test --------------------------------------------

  double reduced_cost(int v, bool phase2) const {
    if (v < n_) {
      const double base = phase2 ? prob_->c[v] : 0.0;
      return base - prob_->A->col_dot(v, pi_);
    }
    return -pi_[v - n_];
  }

  bool eligible(int v, double d) const {
    switch (status_[v]) {
      case BasisStatus::Lower: return d < -par_.opt_tol;
      case BasisStatus::Upper: return d > par_.opt_tol;
      case BasisStatus::Zero: return std::fabs(d) > par_.opt_tol;
      case BasisStatus::Basic: return false;
    }
    return false;
  }

  void price(bool phase2, bool bland, int& enter, double& d_enter) {
    btran(phase2);
    enter = -1;
    d_enter = 0.0;
    double best = 0.0;
    auto consider = [&](int v, double d) {
      if (!eligible(v, d)) return;
      if (bland) {
        if (enter < 0 || v < enter) {
          enter = v;
          d_enter = d;
        }
        return;
      }
      const double score = std::fabs(d);
      if (score > best + 1e-12 || (score > best - 1e-12 && (enter < 0 || v < enter))) {
        best = score;
        enter = v;
        d_enter = d;
      }
    };
    for (int j = 0; j < n_; ++j) {
      if (status_[j] == BasisStatus::Basic) continue;
      consider(j, reduced_cost(j, phase2));
    }
    for (int t = 0; t < k_; ++t) {
      const int v = n_ + K_[t];
      consider(v, -pi_[K_[t]]);
    }
  }

  int enter_direction(int enter, double d) const {
    switch (status_[enter]) {
      case BasisStatus::Lower: return +1;
      case BasisStatus::Upper: return -1;
      default: return d < 0.0 ? +1 : -1;
    }
  }

  // First-breakpoint ratio test. Basics currently outside a bound block at
  // that bound (phase-1 breakpoints); feasible basics block at the bound in
  // the direction of motion. `leave = -1` with finite t means a bound flip.
  void ratio_test(int enter, int dir, bool bland, int& leave, double& t, BasisStatus& side) {
    leave = -1;
    side = BasisStatus::Lower;
    double own = kInf;
    if (status_[enter] == BasisStatus::Lower || status_[enter] == BasisStatus::Upper) {
      own = wu_[enter] - wl_[enter];
    }
    t = own;
    double best_delta = 0.0;
    auto consider = [&](int v, double w) {
      const double delta = -dir * w;
      if (std::fabs(delta) <= par_.pivot_tol) return;
      double bound;
      BasisStatus bside;
      if (delta > 0.0) {
        if (xval_[v] < wl_[v] - p1_tol_) {
          bound = wl_[v];
          bside = BasisStatus::Lower;
        } else if (wu_[v] < kInf) {
          bound = wu_[v];
          bside = BasisStatus::Upper;
        } else {
          return;
        }
      } else {
        if (xval_[v] > wu_[v] + p1_tol_) {
          bound = wu_[v];
          bside = BasisStatus::Upper;
        } else if (wl_[v] > -kInf) {
          bound = wl_[v];
          bside = BasisStatus::Lower;
        } else {
          return;
        }
      }
      double tv = (bound - xval_[v]) / delta;
      if (tv < 0.0) tv = 0.0;
      bool take = false;
      if (tv < t - 1e-12) {
        take = true;
      } else if (tv <= t + 1e-12 && leave >= 0) {
        take = bland ? (v < leave) : (std::fabs(delta) > best_delta);
      } else if (tv <= t + 1e-12 && leave < 0 && tv < own) {
        take = true;
      }
      if (take) {
        t = tv;
        leave = v;
        side = bside;
        best_delta = std::fabs(delta);
      }
    };
    for (int i = 0; i < k_; ++i) consider(S_[i], wS_[i]);
    for (int row = 0; row < m_; ++row) {
      if (slack_basic_[row]) consider(n_ + row, wslack_[row]);
    }
    (void)enter;
  }

  void apply_step(int enter, int dir, double t, int leave, BasisStatus side) {
    if (t != 0.0) {
      xval_[enter] += dir * t;
      for (int i = 0; i < k_; ++i) xval_[S_[i]] -= dir * t * wS_[i];
      for (int row = 0; row < m_; ++row) {
        if (slack_basic_[row]) xval_[n_ + row] -= dir * t * wslack_[row];
      }
    }
    if (leave < 0) {
      // Bound-to-bound flip.
      status_[enter] = dir > 0 ? BasisStatus::Upper : BasisStatus::Lower;
      xval_[enter] = dir > 0 ? wu_[enter] : wl_[enter];
      return;
    }
    xval_[leave] = side == BasisStatus::Lower ? wl_[leave] : wu_[leave];
    status_[leave] = side;
    status_[enter] = BasisStatus::Basic;
    const bool enter_struct = enter < n_;
    const bool leave_struct = leave < n_;
    if (enter_struct && leave_struct) {
      pivot_replace_column(enter, leave);
    } else if (enter_struct && !leave_struct) {
      pivot_grow(enter, leave - n_);
    } else if (!enter_struct && leave_struct) {
      pivot_shrink(enter - n_, leave);
    } else {
      pivot_replace_row(enter - n_, leave - n_);
    }
  }

  // --- the four kernel updates -------------------------------------------

  // Structural enters, structural leaves: eta update of Kinv on row p.
  void pivot_replace_column(int enter, int leave) {
    const int p = pos_S_[leave];
    const double piv = wS_[p];
    double* Kp = Kinv_.data() + static_cast<std::size_t>(p) * cap_;
    const double inv_piv = 1.0 / piv;
    for (int j = 0; j < k_; ++j) Kp[j] *= inv_piv;
    for (int i = 0; i < k_; ++i) {
      if (i == p) continue;
      const double f = wS_[i];
      if (f == 0.0) continue;
      double* Ki = Kinv_.data() + static_cast<std::size_t>(i) * cap_;
      for (int j = 0; j < k_; ++j) Ki[j] -= f * Kp[j];
    }
    S_[p] = enter;
    pos_S_[leave] = -1;
    pos_S_[enter] = p;
  }

  // Structural enters, slack leaves: the kernel grows by one row and column
  // (bordered inverse).
  void pivot_grow(int enter, int leave_row) {
    const SparseMatrix& A = *prob_->A;
    const double piv = wslack_[leave_row];
    for (int t = 0; t < k_; ++t) veck_[t] = 0.0;
    for (int k = A.row_begin(leave_row); k < A.row_end(leave_row); ++k) {
      const int ps = pos_S_[A.col_at(k)];
      if (ps >= 0) veck_[ps] = A.val_at(k);
    }
    for (int j = 0; j < k_; ++j) gbuf_[j] = 0.0;
    for (int i = 0; i < k_; ++i) {
      const double vi = veck_[i];
      if (vi == 0.0) continue;
      const double* Ki = Kinv_.data() + static_cast<std::size_t>(i) * cap_;
      for (int j = 0; j < k_; ++j) gbuf_[j] += vi * Ki[j];
    }
    const double inv_piv = 1.0 / piv;
    for (int i = 0; i < k_; ++i) {
      double* Ki = Kinv_.data() + static_cast<std::size_t>(i) * cap_;
      const double ui = wS_[i] * inv_piv;
      for (int j = 0; j < k_; ++j) Ki[j] += ui * gbuf_[j];
      Ki[k_] = -ui;
    }
    double* Kk = Kinv_.data() + static_cast<std::size_t>(k_) * cap_;
    for (int j = 0; j < k_; ++j) Kk[j] = -gbuf_[j] * inv_piv;
    Kk[k_] = inv_piv;
    S_.push_back(enter);
    pos_S_[enter] = k_;
    K_.push_back(leave_row);
    pos_K_[leave_row] = k_;
    slack_basic_[leave_row] = 0;
    ++k_;
  }

  // Slack enters, structural leaves: the kernel shrinks by one row and column.
  void pivot_shrink(int enter_row, int leave) {
    const int p = pos_S_[leave];
    const int pr = pos_K_[enter_row];
    double* Kp = Kinv_.data() + static_cast<std::size_t>(p) * cap_;
    const double piv = Kp[pr];
    for (int i = 0; i < k_; ++i) {
      if (i == p) continue;
      double* Ki = Kinv_.data() + static_cast<std::size_t>(i) * cap_;
      const double f = Ki[pr] / piv;
      if (f == 0.0) continue;
      for (int j = 0; j < k_; ++j) Ki[j] -= f * Kp[j];
    }
    const int last = k_ - 1;
    if (p != last) {
      double* Kl = Kinv_.data() + static_cast<std::size_t>(last) * cap_;
      for (int j = 0; j < k_; ++j) std::swap(Kp[j], Kl[j]);
      S_[p] = S_[last];
      pos_S_[S_[p]] = p;
    }
    if (pr != last) {
      for (int i = 0; i < k_; ++i) {
        double* Ki = Kinv_.data() + static_cast<std::size_t>(i) * cap_;
        std::swap(Ki[pr], Ki[last]);
      }
      K_[pr] = K_[last];
      pos_K_[K_[pr]] = pr;
    }
    S_.pop_back();
    K_.pop_back();
    --k_;
    pos_S_[leave] = -1;
    pos_K_[enter_row] = -1;
    slack_basic_[enter_row] = 1;
  }

  // Slack enters, slack leaves: row pr of the kernel matrix is replaced
  // (Sherman-Morrison on Kinv).
  void pivot_replace_row(int enter_row, int leave_row) {
    const SparseMatrix& A = *prob_->A;
    const int pr = pos_K_[enter_row];
    const double denom = -wslack_[leave_row];
    for (int t = 0; t < k_; ++t) veck_[t] = 0.0;
    for (int k = A.row_begin(leave_row); k < A.row_end(leave_row); ++k) {
      const int ps = pos_S_[A.col_at(k)];
      if (ps >= 0) veck_[ps] += A.val_at(k);
    }
    for (int k = A.row_begin(enter_row); k < A.row_end(enter_row); ++k) {
      const int ps = pos_S_[A.col_at(k)];
      if (ps >= 0) veck_[ps] -= A.val_at(k);
    }
    for (int j = 0; j < k_; ++j) gbuf_[j] = 0.0;
    for (int i = 0; i < k_; ++i) {
      const double vi = veck_[i];
      if (vi == 0.0) continue;
      const double* Ki = Kinv_.data() + static_cast<std::size_t>(i) * cap_;
      for (int j = 0; j < k_; ++j) gbuf_[j] += vi * Ki[j];
    }
    for (int i = 0; i < k_; ++i) colbuf_[i] = Kinv_[static_cast<std::size_t>(i) * cap_ + pr];
    for (int i = 0; i < k_; ++i) {
      const double f = colbuf_[i] / denom;
      if (f == 0.0) continue;
      double* Ki = Kinv_.data() + static_cast<std::size_t>(i) * cap_;
      for (int j = 0; j < k_; ++j) Ki[j] -= f * gbuf_[j];
    }
    K_[pr] = leave_row;
    pos_K_[leave_row] = pr;
    pos_K_[enter_row] = -1;
    slack_basic_[enter_row] = 1;
    slack_basic_[leave_row] = 0;
  }

  // --- factorization ------------------------------------------------------

  // Rebuilds Kinv from S and K by Gauss-Jordan. Dependent structural columns
  // are dropped to their nearest bound and uncovered rows get their slack
  // back; that repair loop makes any status vector a legal warm start.
  void factorize() {
    for (int attempt = 0; attempt < 4; ++attempt) {
      const int k = k_;
      if (k == 0) {
        pivots_since_refactor_ = 0;
        return;
      }
      const SparseMatrix& A = *prob_->A;
      std::vector<double> work(static_cast<std::size_t>(k) * k, 0.0);
      for (int t = 0; t < k; ++t) {
        const int col = S_[t];
        for (int kk = A.col_begin(col); kk < A.col_end(col); ++kk) {
          const int pk = pos_K_[A.row_at(kk)];
          if (pk >= 0) work[static_cast<std::size_t>(pk) * k + t] = A.cval_at(kk);
        }
      }
      std::vector<std::uint8_t> row_used(k, 0);
      std::vector<int> defect_cols;
      for (int t = 0; t < k; ++t) {
        int piv_row = -1;
        double best = 1e-9;
        for (int r = 0; r < k; ++r) {
          if (row_used[r]) continue;
          const double v = std::fabs(work[static_cast<std::size_t>(r) * k + t]);
          if (v > best) {
            best = v;
            piv_row = r;
          }
        }
        if (piv_row < 0) {
          defect_cols.push_back(t);
          continue;
        }
        row_used[piv_row] = 1;
        const double* prow = work.data() + static_cast<std::size_t>(piv_row) * k;
        const double inv_piv = 1.0 / prow[t];
        for (int r = 0; r < k; ++r) {
          if (r == piv_row) continue;
          double* wr = work.data() + static_cast<std::size_t>(r) * k;
          const double f = wr[t] * inv_piv;
          if (f == 0.0) continue;
          for (int j = 0; j < k; ++j) wr[j] -= f * prow[j];
        }
      }
      if (defect_cols.empty()) {
        invert_kernel();
        pivots_since_refactor_ = 0;
        return;
      }
      // Repair: drop dependent columns, give uncovered rows their slack.
      for (auto it = defect_cols.rbegin(); it != defect_cols.rend(); ++it) {
        const int t = *it;
        const int col = S_[t];
        pos_S_[col] = -1;
        if (wl_[col] > -kInf &&
            (wu_[col] == kInf || std::fabs(xval_[col] - wl_[col]) <= std::fabs(xval_[col] - wu_[col]))) {
          status_[col] = BasisStatus::Lower;
        } else if (wu_[col] < kInf) {
          status_[col] = BasisStatus::Upper;
        } else {
          status_[col] = BasisStatus::Zero;
        }
        S_[t] = S_.back();
        if (t != static_cast<int>(S_.size()) - 1) pos_S_[S_[t]] = t;
        S_.pop_back();
      }
      std::vector<int> uncovered;
      for (int r = 0; r < k; ++r) {
        if (!row_used[r]) uncovered.push_back(K_[r]);
      }
      for (std::size_t i = 0; i < uncovered.size(); ++i) {
        const int row = uncovered[i];
        const int pr = pos_K_[row];
        pos_K_[row] = -1;
        slack_basic_[row] = 1;
        status_[n_ + row] = BasisStatus::Basic;
        K_[pr] = K_.back();
        if (pr != static_cast<int>(K_.size()) - 1) pos_K_[K_[pr]] = pr;
        K_.pop_back();
      }
      k_ = static_cast<int>(S_.size());
      if (k_ != static_cast<int>(K_.size())) throw NumericalError("simplex: basis repair lost symmetry");
      set_nonbasic_values();
    }
    throw NumericalError("simplex: factorization repair did not converge");
  }

  // Plain Gauss-Jordan inverse of A[K,S] into Kinv_, assuming nonsingular.
  void invert_kernel() {
    const int k = k_;
    const SparseMatrix& A = *prob_->A;
    std::vector<double> work(static_cast<std::size_t>(k) * k, 0.0);
    for (int t = 0; t < k; ++t) {
      const int col = S_[t];
      for (int kk = A.col_begin(col); kk < A.col_end(col); ++kk) {
        const int pk = pos_K_[A.row_at(kk)];
        if (pk >= 0) work[static_cast<std::size_t>(pk) * k + t] = A.cval_at(kk);
      }
    }
    // inv = work^-1, then Kinv[i][j] = inv[i][j] with i over S, j over K:
    // work rows are K positions, so invert work and transpose roles directly.
    std::vector<double> inv(static_cast<std::size_t>(k) * k, 0.0);
    for (int i = 0; i < k; ++i) inv[static_cast<std::size_t>(i) * k + i] = 1.0;
    std::vector<int> perm(k);
    for (int i = 0; i < k; ++i) perm[i] = i;
    for (int t = 0; t < k; ++t) {
      int piv = -1;
      double best = 0.0;
      for (int r = t; r < k; ++r) {
        const double v = std::fabs(work[static_cast<std::size_t>(r) * k + t]);
        if (v > best) {
          best = v;
          piv = r;
        }
      }
      if (piv < 0 || best < 1e-12) throw NumericalError("simplex: singular kernel after repair");
      if (piv != t) {
        for (int j = 0; j < k; ++j) {
          std::swap(work[static_cast<std::size_t>(t) * k + j], work[static_cast<std::size_t>(piv) * k + j]);
          std::swap(inv[static_cast<std::size_t>(t) * k + j], inv[static_cast<std::size_t>(piv) * k + j]);
        }
      }
      double* wt = work.data() + static_cast<std::size_t>(t) * k;
      double* it_ = inv.data() + static_cast<std::size_t>(t) * k;
      const double inv_piv = 1.0 / wt[t];
      for (int j = 0; j < k; ++j) {
        wt[j] *= inv_piv;
        it_[j] *= inv_piv;
      }
      for (int r = 0; r < k; ++r) {
        if (r == t) continue;
        double* wr = work.data() + static_cast<std::size_t>(r) * k;
        double* ir = inv.data() + static_cast<std::size_t>(r) * k;
        const double f = wr[t];
        if (f == 0.0) continue;
        for (int j = 0; j < k; ++j) {
          wr[j] -= f * wt[j];
          ir[j] -= f * it_[j];
        }
      }
    }
    // inv now holds (A[K,S])^-1 in (S position) x (K position) layout.
    for (int i = 0; i < k; ++i) {
      double* Ki = Kinv_.data() + static_cast<std::size_t>(i) * cap_;
      const double* src = inv.data() + static_cast<std::size_t>(i) * k;
      for (int j = 0; j < k; ++j) Ki[j] = src[j];
    }
  }

  // --- solution assembly ---------------------------------------------------

  void finish_statuses(LpSolution& sol) const {
    for (int j = 0; j < n_; ++j) sol.basis[j] = status_[j];
    for (int i = 0; i < m_; ++i) sol.row_basis[i] = status_[n_ + i];
  }

  void fill_solution(LpSolution& sol) {
    btran(true);
    for (int j = 0; j < n_; ++j) {
      sol.x[j] = xval_[j];
      sol.reduced_costs[j] = prob_->c[j] - prob_->A->col_dot(j, pi_);
      sol.basis[j] = status_[j];
    }
    for (int i = 0; i < m_; ++i) {
      sol.duals[i] = pi_[i];
      sol.row_basis[i] = status_[n_ + i];
    }
    sol.objective = prob_->objective_value(sol.x);
  }

  const MilpProblem* prob_;
  Params par_;
  int n_ = 0;
  int m_ = 0;
  int cap_ = 0;
  int k_ = 0;
  double p1_tol_ = 1e-9;
  bool has_state_ = false;
  int pivots_since_refactor_ = 0;
  long long total_iters_ = 0;

  std::vector<double> wl_, wu_, xval_;
  std::vector<BasisStatus> status_;
  std::vector<int> S_, K_, pos_S_, pos_K_;
  std::vector<std::uint8_t> slack_basic_;
  std::vector<double> Kinv_;
  std::vector<double> wS_, tmpk_, veck_, gbuf_, colbuf_, rhsS_;
  std::vector<double> wslack_, colvals_, pi_, rhs_;
  std::vector<int> touched_;
};

inline LpSolution solve_lp(const MilpProblem& p, const std::vector<BoundOverride>& overrides = {}) {
  SimplexSolver solver(p);
  return solver.solve(overrides, false);
}

struct MilpOracleResult {
  bool feasible = false;
  double objective = kInf;
  std::vector<double> x;
};

// Exhaustive oracle for tiny instances: tries every 0/1 assignment of the
// integer columns, solves the continuous rest, and keeps the best. Integer
// columns must be binary.
inline MilpOracleResult brute_force_milp(const MilpProblem& p, int max_binaries = 16) {
  std::vector<int> bins;
  for (int j = 0; j < p.num_vars(); ++j) {
    if (!p.is_integer[j]) continue;
    if (p.l[j] < 0.0 || p.u[j] > 1.0) throw ConfigError("brute_force_milp: integer column not binary");
    bins.push_back(j);
  }
  if (static_cast<int>(bins.size()) > max_binaries) {
    throw ConfigError("brute_force_milp: too many binaries for exhaustive search");
  }
  MilpOracleResult best;
  const std::uint64_t total = 1ULL << bins.size();
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    Assignment a;
    bool in_box = true;
    for (std::size_t i = 0; i < bins.size(); ++i) {
      const double v = (mask >> i) & 1 ? 1.0 : 0.0;
      if (v < p.l[bins[i]] || v > p.u[bins[i]]) {
        in_box = false;
        break;
      }
      a.add(bins[i], v);
    }
    if (!in_box) continue;
    const MilpProblem sub = fix_variables(p, a);
    const LpSolution sol = solve_lp(sub);
    if (sol.status == LpStatus::Optimal && sol.objective < best.objective - 1e-12) {
      best.feasible = true;
      best.objective = sol.objective;
      best.x = sol.x;
    }
  }
  return best;
}

}  // namespace ucmip
