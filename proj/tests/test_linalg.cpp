#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ccf/linalg.hpp"

namespace ccf {
namespace {

TEST(Linalg, ClosedForm2x2MatchesKnownSpectrum) {
  const double s3 = std::sqrt(3.0);
  Eigen::Matrix2d P;
  P << s3, 1.0, 1.0, s3;
  const Eigen::Vector2d e = linalg::symmetric_eigenvalues_2x2(P);
  EXPECT_NEAR(e(0), s3 - 1.0, 1e-15);
  EXPECT_NEAR(e(1), s3 + 1.0, 1e-15);
}

TEST(Linalg, JacobiAgreesWithEigenOnRandomSymmetric) {
  std::mt19937 rng(7);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + trial % 4;
    MatrixXd a(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) a(i, j) = nd(rng);
    }
    a = 0.5 * (a + a.transpose()).eval();
    const VectorXd ours = linalg::jacobi_eigenvalues(a);
    const VectorXd ref = Eigen::SelfAdjointEigenSolver<MatrixXd>(a).eigenvalues();
    EXPECT_LT((ours - ref).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Linalg, SingularValuesOfWitnessMatrix) {
  MatrixXd U(2, 2);
  U << -5.0, 1.0, -1.0, 1.0;
  const VectorXd s = linalg::singular_values(U);
  // Gram eigenvalues 14 -+ sqrt(180).
  EXPECT_NEAR(s(0), std::sqrt(14.0 - std::sqrt(180.0)), 1e-12);
  EXPECT_NEAR(s(1), std::sqrt(14.0 + std::sqrt(180.0)), 1e-12);
}

TEST(Linalg, SymmetryCheck) {
  MatrixXd m(2, 2);
  m << 1.0, 2.0, 2.0 + 1e-13, 1.0;
  EXPECT_TRUE(linalg::is_symmetric(m));
  m(1, 0) = 2.1;
  EXPECT_FALSE(linalg::is_symmetric(m));
  EXPECT_FALSE(linalg::is_symmetric(MatrixXd::Zero(2, 3)));
}

}  // namespace
}  // namespace ccf
