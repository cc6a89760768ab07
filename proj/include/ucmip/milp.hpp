// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ucmip/common.hpp"

namespace ucmip {

// Sparse matrix stored in CSR with a CSC mirror built once at construction.
// Immutable after build; problems share it by pointer.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  // Builds from triplets. Duplicate (row, col) entries are summed; explicit
  // zeros are dropped.
  SparseMatrix(int rows, int cols, const std::vector<int>& ti, const std::vector<int>& tj,
               const std::vector<double>& tv)
      : rows_(rows), cols_(cols) {
    if (ti.size() != tj.size() || ti.size() != tv.size()) {
      throw ShapeError("SparseMatrix: triplet arrays differ in length");
    }
    std::vector<std::vector<std::pair<int, double>>> by_row(rows);
    for (std::size_t k = 0; k < ti.size(); ++k) {
      if (ti[k] < 0 || ti[k] >= rows || tj[k] < 0 || tj[k] >= cols) {
        throw ShapeError("SparseMatrix: triplet index out of range");
      }
      by_row[ti[k]].push_back({tj[k], tv[k]});
    }
    row_ptr_.assign(rows + 1, 0);
    std::vector<double> acc(cols, 0.0);
    std::vector<int> touched;
    for (int i = 0; i < rows; ++i) {
      touched.clear();
      for (const auto& [j, v] : by_row[i]) {
        if (acc[j] == 0.0) touched.push_back(j);
        acc[j] += v;
      }
      std::sort(touched.begin(), touched.end());
      for (int j : touched) {
        if (acc[j] != 0.0) {
          col_idx_.push_back(j);
          vals_.push_back(acc[j]);
        }
        acc[j] = 0.0;
      }
      row_ptr_[i + 1] = static_cast<int>(col_idx_.size());
    }
    build_csc();
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int nnz() const { return static_cast<int>(vals_.size()); }

  // CSR access for row i: [row_begin(i), row_end(i)) over col_at/val_at.
  int row_begin(int i) const { return row_ptr_[i]; }
  int row_end(int i) const { return row_ptr_[i + 1]; }
  int col_at(int k) const { return col_idx_[k]; }
  double val_at(int k) const { return vals_[k]; }

  // CSC access for column j.
  int col_begin(int j) const { return col_ptr_[j]; }
  int col_end(int j) const { return col_ptr_[j + 1]; }
  int row_at(int k) const { return row_idx_[k]; }
  double cval_at(int k) const { return cvals_[k]; }

  double row_dot(int i, const std::vector<double>& x) const {
    double s = 0.0;
    for (int k = row_begin(i); k < row_end(i); ++k) s += vals_[k] * x[col_idx_[k]];
    return s;
  }

  double col_dot(int j, const std::vector<double>& y) const {
    double s = 0.0;
    for (int k = col_begin(j); k < col_end(j); ++k) s += cvals_[k] * y[row_idx_[k]];
    return s;
  }

  double row_norm2(int i) const {
    double s = 0.0;
    for (int k = row_begin(i); k < row_end(i); ++k) s += vals_[k] * vals_[k];
    return std::sqrt(s);
  }

  double row_max_abs(int i) const {
    double s = 0.0;
    for (int k = row_begin(i); k < row_end(i); ++k) s = std::max(s, std::fabs(vals_[k]));
    return s;
  }

  void to_triplets(std::vector<int>& ti, std::vector<int>& tj, std::vector<double>& tv) const {
    ti.clear();
    tj.clear();
    tv.clear();
    for (int i = 0; i < rows_; ++i) {
      for (int k = row_begin(i); k < row_end(i); ++k) {
        ti.push_back(i);
        tj.push_back(col_idx_[k]);
        tv.push_back(vals_[k]);
      }
    }
  }

 private:
  void build_csc() {
    col_ptr_.assign(cols_ + 1, 0);
    for (int j : col_idx_) ++col_ptr_[j + 1];
    for (int j = 0; j < cols_; ++j) col_ptr_[j + 1] += col_ptr_[j];
    row_idx_.resize(vals_.size());
    cvals_.resize(vals_.size());
    std::vector<int> next(col_ptr_.begin(), col_ptr_.end() - 1);
    for (int i = 0; i < rows_; ++i) {
      for (int k = row_begin(i); k < row_end(i); ++k) {
        const int j = col_idx_[k];
        row_idx_[next[j]] = i;
        cvals_[next[j]] = vals_[k];
        ++next[j];
      }
    }
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<int> row_ptr_{0};
  std::vector<int> col_idx_;
  std::vector<double> vals_;
  std::vector<int> col_ptr_{0};
  std::vector<int> row_idx_;
  std::vector<double> cvals_;
};

// General-form problem: min c'x subject to Ax <= b, l <= x <= u, with an
// integrality mask. All rows are <=; callers split equalities and two-sided
// rows before construction. A is shared so bound-only copies stay cheap.
struct MilpProblem {
  std::shared_ptr<const SparseMatrix> A;
  std::vector<double> c;
  std::vector<double> b;
  std::vector<double> l;
  std::vector<double> u;
  std::vector<std::uint8_t> is_integer;

  int num_vars() const { return static_cast<int>(c.size()); }
  int num_rows() const { return static_cast<int>(b.size()); }

  int num_integer() const {
    int p = 0;
    for (auto f : is_integer) p += f ? 1 : 0;
    return p;
  }

  // Checks dimensional consistency, l <= u, and absence of all-zero rows.
  void validate() const {
    if (!A) throw ConfigError("MilpProblem: missing constraint matrix");
    const int n = num_vars();
    const int m = num_rows();
    if (A->cols() != n || A->rows() != m || static_cast<int>(l.size()) != n ||
        static_cast<int>(u.size()) != n || static_cast<int>(is_integer.size()) != n) {
      throw ShapeError("MilpProblem: inconsistent dimensions");
    }
    for (int j = 0; j < n; ++j) {
      if (!(l[j] <= u[j])) throw ConfigError("MilpProblem: l > u at column " + std::to_string(j));
    }
    for (int i = 0; i < m; ++i) {
      if (A->row_begin(i) == A->row_end(i)) {
        throw ConfigError("MilpProblem: all-zero row " + std::to_string(i));
      }
    }
  }

  double objective_value(const std::vector<double>& x) const {
    double s = 0.0;
    for (int j = 0; j < num_vars(); ++j) s += c[j] * x[j];
    return s;
  }
};

// Partial 0/1 assignment to integer columns.
struct Assignment {
  std::vector<std::pair<int, double>> pairs;

  void add(int col, double value) { pairs.push_back({col, value}); }
  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

// Returns a copy with l_d = u_d = value for each assigned column. A valid
// assignment outside the column's box yields a problem whose LP relaxation is
// infeasible; that is the caller's signal, not an error here.
inline MilpProblem fix_variables(const MilpProblem& problem, const Assignment& a) {
  MilpProblem out = problem;
  std::vector<std::uint8_t> seen(problem.num_vars(), 0);
  for (const auto& [col, value] : a.pairs) {
    if (col < 0 || col >= problem.num_vars()) throw ShapeError("fix_variables: column out of range");
    if (!problem.is_integer[col]) throw ConfigError("fix_variables: column not integer-flagged");
    if (seen[col]) throw ConfigError("fix_variables: duplicate column in assignment");
    seen[col] = 1;
    out.l[col] = value;
    out.u[col] = value;
  }
  return out;
}

struct FeasibilityReport {
  bool feasible = true;
  double worst_violation = 0.0;
  // Row index for a constraint violation, -1 for a bound or integrality
  // violation; `detail` names the offender either way.
  int worst_row = -1;
  std::string detail;
};

// Verifies Ax <= b + tol, l - tol <= x <= u + tol, and integrality within tol.
inline FeasibilityReport check_feasible(const MilpProblem& problem, const std::vector<double>& x,
                                        double tol = 1e-6) {
  if (static_cast<int>(x.size()) != problem.num_vars()) {
    throw ShapeError("check_feasible: x has wrong length");
  }
  FeasibilityReport rep;
  auto note = [&rep](double viol, int row, const std::string& what) {
    if (viol > rep.worst_violation) {
      rep.worst_violation = viol;
      rep.worst_row = row;
      rep.detail = what;
    }
    if (viol > 0.0) rep.feasible = false;
  };
  for (int j = 0; j < problem.num_vars(); ++j) {
    if (x[j] < problem.l[j] - tol) note(problem.l[j] - x[j], -1, "lower bound, column " + std::to_string(j));
    if (x[j] > problem.u[j] + tol) note(x[j] - problem.u[j], -1, "upper bound, column " + std::to_string(j));
    if (problem.is_integer[j]) {
      const double frac = std::fabs(x[j] - std::round(x[j]));
      if (frac > tol) note(frac, -1, "integrality, column " + std::to_string(j));
    }
  }
  for (int i = 0; i < problem.num_rows(); ++i) {
    const double lhs = problem.A->row_dot(i, x);
    if (lhs > problem.b[i] + tol) note(lhs - problem.b[i], i, "row " + std::to_string(i));
  }
  return rep;
}

}  // namespace ucmip
