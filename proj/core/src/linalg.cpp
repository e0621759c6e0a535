#include "driftbo/linalg.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace driftbo {

CholeskyResult cholesky_with_jitter(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) {
    throw std::invalid_argument("cholesky_with_jitter: matrix must be square");
  }
  const double mean_diag = a.diagonal().mean();
  double base = 1e-8 * std::abs(mean_diag);
  if (base <= 0.0 || !std::isfinite(base)) base = 1e-12;

  CholeskyResult result;
  double jitter = 0.0;  // plain factorization first
  for (int attempt = 0; attempt <= 7; ++attempt) {
    Eigen::MatrixXd working = a;
    if (jitter > 0.0) working.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(working);
    if (llt.info() == Eigen::Success) {
      result.L = llt.matrixL();
      result.jitter = jitter;
      result.attempts = attempt;
      return result;
    }
    jitter = (jitter == 0.0) ? base : 2.0 * jitter;
  }
  std::ostringstream msg;
  msg << "cholesky_with_jitter: factorization failed after 6 jitter "
         "escalations (final jitter "
      << jitter << ", dim " << a.rows() << ")";
  throw std::runtime_error(msg.str());
}

double min_symmetric_eigenvalue(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(
      a, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

}  // namespace driftbo
