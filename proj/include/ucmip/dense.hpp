// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ucmip/common.hpp"

namespace ucmip {

// Row-major dense matrix. Small and unfancy; used for PTDF factorization,
// graph Laplacians and the neural layers.
class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), a_(static_cast<std::size_t>(rows) * cols, fill) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double& operator()(int i, int j) { return a_[static_cast<std::size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return a_[static_cast<std::size_t>(i) * cols_ + j]; }
  double* data() { return a_.data(); }
  const double* data() const { return a_.data(); }
  double* row(int i) { return a_.data() + static_cast<std::size_t>(i) * cols_; }
  const double* row(int i) const { return a_.data() + static_cast<std::size_t>(i) * cols_; }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> a_;
};

inline Mat matmul(const Mat& x, const Mat& y) {
  if (x.cols() != y.rows()) throw ShapeError("matmul: inner dimensions differ");
  Mat out(x.rows(), y.cols());
  for (int i = 0; i < x.rows(); ++i) {
    const double* xi = x.row(i);
    double* oi = out.row(i);
    for (int k = 0; k < x.cols(); ++k) {
      const double v = xi[k];
      if (v == 0.0) continue;
      const double* yk = y.row(k);
      for (int j = 0; j < y.cols(); ++j) oi[j] += v * yk[j];
    }
  }
  return out;
}

// Solves a * x = b in place via Gaussian elimination with partial pivoting.
// Returns false when the matrix is singular to working precision.
inline bool lu_solve(Mat a, std::vector<double>& b) {
  const int n = a.rows();
  if (a.cols() != n || static_cast<int>(b.size()) != n) throw ShapeError("lu_solve: bad shapes");
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  for (int col = 0; col < n; ++col) {
    int piv = col;
    double best = std::fabs(a(col, col));
    for (int r = col + 1; r < n; ++r) {
      const double v = std::fabs(a(r, col));
      if (v > best) {
        best = v;
        piv = r;
      }
    }
    if (best < 1e-12) return false;
    if (piv != col) {
      for (int j = 0; j < n; ++j) std::swap(a(col, j), a(piv, j));
      std::swap(b[col], b[piv]);
    }
    const double d = a(col, col);
    for (int r = col + 1; r < n; ++r) {
      const double f = a(r, col) / d;
      if (f == 0.0) continue;
      a(r, col) = 0.0;
      for (int j = col + 1; j < n; ++j) a(r, j) -= f * a(col, j);
      b[r] -= f * b[col];
    }
  }
  for (int col = n - 1; col >= 0; --col) {
    b[col] /= a(col, col);
    for (int r = 0; r < col; ++r) b[r] -= a(r, col) * b[col];
  }
  return true;
}

// Inverts a square matrix by Gauss-Jordan with partial pivoting.
inline bool invert(const Mat& a, Mat& out) {
  const int n = a.rows();
  if (a.cols() != n) throw ShapeError("invert: matrix not square");
  Mat work = a;
  out = Mat::identity(n);
  for (int col = 0; col < n; ++col) {
    int piv = col;
    double best = std::fabs(work(col, col));
    for (int r = col + 1; r < n; ++r) {
      const double v = std::fabs(work(r, col));
      if (v > best) {
        best = v;
        piv = r;
      }
    }
    if (best < 1e-12) return false;
    if (piv != col) {
      for (int j = 0; j < n; ++j) {
        std::swap(work(col, j), work(piv, j));
        std::swap(out(col, j), out(piv, j));
      }
    }
    const double inv_d = 1.0 / work(col, col);
    for (int j = 0; j < n; ++j) {
      work(col, j) *= inv_d;
      out(col, j) *= inv_d;
    }
    for (int r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = work(r, col);
      if (f == 0.0) continue;
      for (int j = 0; j < n; ++j) {
        work(r, j) -= f * work(col, j);
        out(r, j) -= f * out(col, j);
      }
    }
  }
  return true;
}

// Largest eigenvalue of a symmetric matrix by power iteration. The start
// vector is pseudo-random so it is not orthogonal to the top eigenvector.
inline double power_iteration_max_eig(const Mat& a, double tol = 1e-9, int max_iter = 10000) {
  const int n = a.rows();
  if (a.cols() != n) throw ShapeError("power_iteration: matrix not square");
  if (n == 0) return 0.0;
  SplitMix64 rng(0x5EEDull);
  std::vector<double> v(n), w(n);
  double norm = 0.0;
  for (int i = 0; i < n; ++i) {
    v[i] = rng.uniform(0.5, 1.5);
    norm += v[i] * v[i];
  }
  norm = std::sqrt(norm);
  for (int i = 0; i < n; ++i) v[i] /= norm;
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      const double* ai = a.row(i);
      for (int j = 0; j < n; ++j) s += ai[j] * v[j];
      w[i] = s;
    }
    double new_lambda = 0.0;
    for (int i = 0; i < n; ++i) new_lambda += v[i] * w[i];
    norm = 0.0;
    for (int i = 0; i < n; ++i) norm += w[i] * w[i];
    norm = std::sqrt(norm);
    if (norm < 1e-300) return 0.0;
    for (int i = 0; i < n; ++i) v[i] = w[i] / norm;
    if (it > 0 && std::fabs(new_lambda - lambda) <= tol * std::max(1.0, std::fabs(new_lambda))) {
      return new_lambda;
    }
    lambda = new_lambda;
  }
  return lambda;
}

}  // namespace ucmip
