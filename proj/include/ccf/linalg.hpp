#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ccf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace linalg {

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
inline Eigen::Vector2d symmetric_eigenvalues_2x2(const Eigen::Matrix2d& m) {
  const double mean = 0.5 * (m(0, 0) + m(1, 1));
  const double half_diff = 0.5 * (m(0, 0) - m(1, 1));
  const double off = 0.5 * (m(0, 1) + m(1, 0));
  const double radius = std::hypot(half_diff, off);
  return {mean - radius, mean + radius};
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix. Returns the
/// eigenvalues in ascending order. Sweeps stop once the off-diagonal
/// Frobenius norm falls below `tol` relative to the full norm.
inline VectorXd jacobi_eigenvalues(const MatrixXd& input, double tol = 1e-12,
                                   int max_sweeps = 100) {
  if (input.rows() != input.cols()) {
    throw std::invalid_argument("jacobi_eigenvalues: matrix must be square");
  }
  const Eigen::Index n = input.rows();
  MatrixXd a = 0.5 * (input + input.transpose());
  const double scale = std::max(a.norm(), 1e-300);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) off += 2.0 * a(p, q) * a(p, q);
    }
    if (std::sqrt(off) <= tol * scale) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  VectorXd eig = a.diagonal();
  std::sort(eig.data(), eig.data() + eig.size());
  return eig;
}

/// Ascending eigenvalues of a symmetric matrix: closed form for 2x2, Jacobi
/// otherwise.
inline VectorXd symmetric_eigenvalues(const MatrixXd& m) {
  if (m.rows() == 2 && m.cols() == 2) {
    return symmetric_eigenvalues_2x2(m);
  }
  return jacobi_eigenvalues(m);
}

/// Singular values of `m` (ascending) from the eigenvalues of its Gram matrix.
inline VectorXd singular_values(const MatrixXd& m) {
  const MatrixXd gram =
      m.rows() >= m.cols() ? MatrixXd(m.transpose() * m) : MatrixXd(m * m.transpose());
  VectorXd eig = symmetric_eigenvalues(gram);
  return eig.cwiseMax(0.0).cwiseSqrt();
}

inline bool is_symmetric(const MatrixXd& m, double tol = 1e-12) {
  return m.rows() == m.cols() && (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

}  // namespace linalg
}  // namespace ccf
