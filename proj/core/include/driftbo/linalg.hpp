#pragma once

#include <Eigen/Dense>

namespace driftbo {

struct CholeskyResult {
  Eigen::MatrixXd L;  // lower triangular
  double jitter = 0.0;
  int attempts = 0;
};

// Cholesky factorization of a symmetric PSD matrix with escalating diagonal
// jitter: starts at 1e-8 times the mean diagonal, doubles up to 6 times on
// failure, then throws std::runtime_error.
CholeskyResult cholesky_with_jitter(const Eigen::MatrixXd& a);

// Minimum eigenvalue of a symmetric matrix (used by PSD checks in tests).
double min_symmetric_eigenvalue(const Eigen::MatrixXd& a);

}  // namespace driftbo
