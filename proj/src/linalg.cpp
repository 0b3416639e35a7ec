#include "linalg.hpp"

#include <algorithm>
#include <cstring>

namespace tmld::la {

int lu_factor(double* A, int n, int* perm) {
  int sign = 1;
  for (int i = 0; i < n; ++i) perm[i] = i;
  for (int k = 0; k < n; ++k) {
    int piv = k;
    double best = std::fabs(A[static_cast<size_t>(k) * n + k]);
    for (int i = k + 1; i < n; ++i) {
      double v = std::fabs(A[static_cast<size_t>(i) * n + k]);
      if (v > best) {
        best = v;
        piv = i;
      }
    }
    if (best == 0.0) throw std::runtime_error("lu_factor: singular matrix");
    if (piv != k) {
      for (int j = 0; j < n; ++j)
        std::swap(A[static_cast<size_t>(piv) * n + j], A[static_cast<size_t>(k) * n + j]);
      std::swap(perm[piv], perm[k]);
      sign = -sign;
    }
    double pivval = A[static_cast<size_t>(k) * n + k];
    for (int i = k + 1; i < n; ++i) {
      double m = A[static_cast<size_t>(i) * n + k] / pivval;
      A[static_cast<size_t>(i) * n + k] = m;
      if (m != 0.0)
        for (int j = k + 1; j < n; ++j)
          A[static_cast<size_t>(i) * n + j] -= m * A[static_cast<size_t>(k) * n + j];
    }
  }
  return sign;
}

void lu_solve(const double* LU, int n, const int* perm, const double* b, double* x) {
  // forward substitution with permuted rhs, unit lower triangle
  for (int i = 0; i < n; ++i) {
    double s = b[perm[i]];
    for (int j = 0; j < i; ++j) s -= LU[static_cast<size_t>(i) * n + j] * x[j];
    x[i] = s;
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = x[i];
    for (int j = i + 1; j < n; ++j) s -= LU[static_cast<size_t>(i) * n + j] * x[j];
    x[i] = s / LU[static_cast<size_t>(i) * n + i];
  }
}

double lu_log_abs_det(const double* LU, int n) {
  double s = 0;
  for (int i = 0; i < n; ++i) s += std::log(std::fabs(LU[static_cast<size_t>(i) * n + i]));
  return s;
}

void solve(const double* A, int n, const double* b, double* x) {
  std::vector<double> LU(A, A + static_cast<size_t>(n) * n);
  std::vector<int> perm(n);
  lu_factor(LU.data(), n, perm.data());
  lu_solve(LU.data(), n, perm.data(), b, x);
}

Mat inverse(const Mat& A) {
  int n = A.rows;
  std::vector<double> LU(A.a);
  std::vector<int> perm(n);
  lu_factor(LU.data(), n, perm.data());
  Mat inv(n, n);
  std::vector<double> e(n, 0.0), col(n);
  for (int j = 0; j < n; ++j) {
    std::fill(e.begin(), e.end(), 0.0);
    e[j] = 1.0;
    lu_solve(LU.data(), n, perm.data(), e.data(), col.data());
    for (int i = 0; i < n; ++i) inv(i, j) = col[i];
  }
  return inv;
}

double log_abs_det(const Mat& A) {
  std::vector<double> LU(A.a);
  std::vector<int> perm(A.rows);
  lu_factor(LU.data(), A.rows, perm.data());
  return lu_log_abs_det(LU.data(), A.rows);
}

void sym_eig(const Mat& A, std::vector<double>& w, Mat& V) {
  int n = A.rows;
  Mat M = A;
  V = Mat::identity(n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += M(p, q) * M(p, q);
    if (off < 1e-26) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        double apq = M(p, q);
        if (std::fabs(apq) < 1e-300) continue;
        double theta = (M(q, q) - M(p, p)) / (2 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1));
        double c = 1.0 / std::sqrt(t * t + 1), s = t * c;
        for (int k = 0; k < n; ++k) {
          double mkp = M(k, p), mkq = M(k, q);
          M(k, p) = c * mkp - s * mkq;
          M(k, q) = s * mkp + c * mkq;
        }
        for (int k = 0; k < n; ++k) {
          double mpk = M(p, k), mqk = M(q, k);
          M(p, k) = c * mpk - s * mqk;
          M(q, k) = s * mpk + c * mqk;
        }
        for (int k = 0; k < n; ++k) {
          double vkp = V(k, p), vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
  }
  w.resize(n);
  for (int i = 0; i < n; ++i) w[i] = M(i, i);
}

Mat sym_sqrt(const Mat& A, double tol) {
  std::vector<double> w;
  Mat V;
  sym_eig(A, w, V);
  for (double& wi : w) {
    if (wi < -tol) throw std::runtime_error("sym_sqrt: matrix is not positive semidefinite");
    wi = wi > 0 ? std::sqrt(wi) : 0.0;
  }
  int n = A.rows;
  Mat R(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0;
      for (int k = 0; k < n; ++k) s += V(i, k) * w[k] * V(j, k);
      R(i, j) = s;
    }
  return R;
}

}  // namespace tmld::la
