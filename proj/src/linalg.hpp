#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace tmld::la {

// Dense row-major matrix. Sized for the small dimensions (d <= ~16) this
// library works with; nothing here is tuned for large systems.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}
  Mat(int r, int c, std::vector<double> data) : rows(r), cols(c), a(std::move(data)) {}

  double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }
  double* data() { return a.data(); }
  const double* data() const { return a.data(); }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

inline void mat_vec(const double* A, int n, int m, const double* x, double* out) {
  for (int i = 0; i < n; ++i) {
    double s = 0;
    const double* row = A + static_cast<size_t>(i) * m;
    for (int j = 0; j < m; ++j) s += row[j] * x[j];
    out[i] = s;
  }
}

inline void mat_tvec(const double* A, int n, int m, const double* x, double* out) {
  for (int j = 0; j < m; ++j) out[j] = 0;
  for (int i = 0; i < n; ++i) {
    const double* row = A + static_cast<size_t>(i) * m;
    for (int j = 0; j < m; ++j) out[j] += row[j] * x[i];
  }
}

inline Mat mat_mul(const Mat& A, const Mat& B) {
  Mat C(A.rows, B.cols);
  for (int i = 0; i < A.rows; ++i)
    for (int k = 0; k < A.cols; ++k) {
      double aik = A(i, k);
      if (aik == 0) continue;
      for (int j = 0; j < B.cols; ++j) C(i, j) += aik * B(k, j);
    }
  return C;
}

inline Mat transpose(const Mat& A) {
  Mat T(A.cols, A.rows);
  for (int i = 0; i < A.rows; ++i)
    for (int j = 0; j < A.cols; ++j) T(j, i) = A(i, j);
  return T;
}

// LU factorization with partial pivoting, in place. perm holds row swaps.
// Returns the sign of the permutation; throws on exact singularity.
int lu_factor(double* A, int n, int* perm);
void lu_solve(const double* LU, int n, const int* perm, const double* b, double* x);
double lu_log_abs_det(const double* LU, int n);

// One-shot solve A x = b (A copied).
void solve(const double* A, int n, const double* b, double* x);

Mat inverse(const Mat& A);
double log_abs_det(const Mat& A);

// Solve L x = b for lower-triangular L (unit check on diagonal is caller's job).
inline void solve_lower(const double* L, int n, const double* b, double* x) {
  for (int i = 0; i < n; ++i) {
    double s = b[i];
    const double* row = L + static_cast<size_t>(i) * n;
    for (int j = 0; j < i; ++j) s -= row[j] * x[j];
    x[i] = s / row[i];
  }
}

// Solve L^T x = b for lower-triangular L.
inline void solve_lower_transposed(const double* L, int n, const double* b, double* x) {
  for (int i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (int j = i + 1; j < n; ++j) s -= L[static_cast<size_t>(j) * n + i] * x[j];
    x[i] = s / L[static_cast<size_t>(i) * n + i];
  }
}

// Symmetric eigendecomposition by cyclic Jacobi; A = V diag(w) V^T.
void sym_eig(const Mat& A, std::vector<double>& w, Mat& V);

// Symmetric PSD square root. Negative eigenvalues below -tol throw; small
// negatives from roundoff are clamped to zero.
Mat sym_sqrt(const Mat& A, double tol = 1e-10);

inline double norm2(const double* x, int n) {
  double s = 0;
  for (int i = 0; i < n; ++i) s += x[i] * x[i];
  return std::sqrt(s);
}

inline double norm_inf(const double* x, int n) {
  double s = 0;
  for (int i = 0; i < n; ++i) s = std::max(s, std::fabs(x[i]));
  return s;
}

inline double dot(const double* x, const double* y, int n) {
  double s = 0;
  for (int i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

}  // namespace tmld::la
