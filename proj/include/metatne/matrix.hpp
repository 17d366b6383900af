#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace metatne {

// Dense row-major matrix of doubles. All model math runs in double precision;
// checkpoints downcast to float32 on disk.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

  double* row(int i) { return a.data() + static_cast<size_t>(i) * cols; }
  const double* row(int i) const { return a.data() + static_cast<size_t>(i) * cols; }

  size_t size() const { return a.size(); }
  void zero() { std::fill(a.begin(), a.end(), 0.0); }

  bool all_finite() const {
    for (const double v : a)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline double dot(const double* x, const double* y, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

inline void axpy(double alpha, const double* x, double* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// out(r x n) = x(r x m) * w(n x m)^T, i.e. out_i = W x_i for each row.
inline void matmul_wt(const Mat& x, const Mat& w, Mat& out) {
  out = Mat(x.rows, w.rows);
  for (int i = 0; i < x.rows; ++i) {
    const double* xi = x.row(i);
    double* oi = out.row(i);
    for (int j = 0; j < w.rows; ++j) oi[j] = dot(xi, w.row(j), x.cols);
  }
}

}  // namespace metatne
