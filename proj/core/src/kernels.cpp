#include "driftbo/kernels.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace driftbo {
namespace {

constexpr double kSqrt2Pi = 2.5066282746310002;

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    std::ostringstream msg;
    msg << what << " must be finite, got " << v;
    throw std::invalid_argument(msg.str());
  }
}

}  // namespace

void SEKernelParams::validate() const {
  require_finite(variance, "SEKernelParams.variance");
  require_finite(lengthscale, "SEKernelParams.lengthscale");
  if (variance <= 0.0) {
    throw std::invalid_argument("SEKernelParams.variance must be > 0");
  }
  if (lengthscale <= 0.0) {
    throw std::invalid_argument("SEKernelParams.lengthscale must be > 0");
  }
}

void HilbertBasisConfig::validate() const {
  if (num_features < 1) {
    throw std::invalid_argument("HilbertBasisConfig.num_features must be >= 1");
  }
  require_finite(domain_half_width, "HilbertBasisConfig.domain_half_width");
  if (domain_half_width <= 0.0) {
    throw std::invalid_argument(
        "HilbertBasisConfig.domain_half_width must be > 0");
  }
}

void ProductSpaceTimeKernelParams::validate() const {
  spatial.validate();
  temporal.validate();
}

double se_kernel(double c, double c_prime, const SEKernelParams& params) {
  params.validate();
  require_finite(c, "se_kernel input c");
  require_finite(c_prime, "se_kernel input c_prime");
  const double d = c - c_prime;
  return params.variance *
         std::exp(-d * d / (2.0 * params.lengthscale * params.lengthscale));
}

double se_kernel_nd(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b,
                    const SEKernelParams& params) {
  const double d2 = (a - b).squaredNorm();
  return params.variance *
         std::exp(-d2 / (2.0 * params.lengthscale * params.lengthscale));
}

double se_spectral_density(double omega, const SEKernelParams& params) {
  params.validate();
  require_finite(omega, "se_spectral_density input omega");
  const double ell = params.lengthscale;
  return params.variance * ell * kSqrt2Pi *
         std::exp(-0.5 * ell * ell * omega * omega);
}

HilbertEigenpair hilbert_eigenpair(int m, double c,
                                   const HilbertBasisConfig& config) {
  config.validate();
  if (m < 1 || m > config.num_features) {
    throw std::invalid_argument("hilbert_eigenpair: m out of [1, M]");
  }
  require_finite(c, "hilbert_eigenpair input c");
  const double j = config.domain_half_width;
  if (std::abs(c) >= j) {
    std::ostringstream msg;
    msg << "hilbert_eigenpair: |c| = " << std::abs(c)
        << " outside open domain (-" << j << ", " << j << ")";
    throw std::domain_error(msg.str());
  }
  const double freq = M_PI * m / (2.0 * j);
  HilbertEigenpair out;
  out.eigenfunction = std::sin(freq * (c + j)) / std::sqrt(j);
  out.eigenvalue = freq * freq;
  return out;
}

Eigen::VectorXd hilbert_phi(double c, const HilbertBasisConfig& config) {
  config.validate();
  const double j = config.domain_half_width;
  if (std::abs(c) >= j) {
    throw std::domain_error("hilbert_phi: |c| >= domain half width");
  }
  const int m_count = config.num_features;
  Eigen::VectorXd phi(m_count);
  const double inv_sqrt_j = 1.0 / std::sqrt(j);
  for (int m = 1; m <= m_count; ++m) {
    phi(m - 1) = inv_sqrt_j * std::sin(M_PI * m * (c + j) / (2.0 * j));
  }
  return phi;
}

Eigen::VectorXd hilbert_eigenvalues(const HilbertBasisConfig& config) {
  config.validate();
  Eigen::VectorXd lambda(config.num_features);
  const double j = config.domain_half_width;
  for (int m = 1; m <= config.num_features; ++m) {
    const double freq = M_PI * m / (2.0 * j);
    lambda(m - 1) = freq * freq;
  }
  return lambda;
}

Eigen::VectorXd hilbert_prior_diag(const SEKernelParams& params,
                                   const HilbertBasisConfig& config) {
  params.validate();
  const Eigen::VectorXd lambda = hilbert_eigenvalues(config);
  Eigen::VectorXd diag(lambda.size());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    diag(i) = se_spectral_density(std::sqrt(lambda(i)), params);
  }
  return diag;
}

HilbertFeatures hilbert_features(double c, const SEKernelParams& params,
                                 const HilbertBasisConfig& config) {
  HilbertFeatures out;
  out.phi = hilbert_phi(c, config);
  out.prior_diag = hilbert_prior_diag(params, config);
  return out;
}

double hilbert_approx_kernel(double c, double c_prime,
                             const SEKernelParams& params,
                             const HilbertBasisConfig& config) {
  const HilbertFeatures fa = hilbert_features(c, params, config);
  const Eigen::VectorXd phi_b = hilbert_phi(c_prime, config);
  return (fa.prior_diag.array() * fa.phi.array() * phi_b.array()).sum();
}

double clamp_into_domain(double c, const HilbertBasisConfig& config) {
  const double margin = config.domain_half_width - 1e-9;
  if (c > margin) return margin;
  if (c < -margin) return -margin;
  return c;
}

double product_space_time_kernel(const Eigen::RowVectorXd& xa, double ta,
                                 const Eigen::RowVectorXd& xb, double tb,
                                 const ProductSpaceTimeKernelParams& params) {
  const double spatial = se_kernel_nd(xa, xb, params.spatial);
  const double dt = ta - tb;
  const double ell = params.temporal.lengthscale;
  const double temporal =
      params.temporal.variance * std::exp(-dt * dt / (2.0 * ell * ell));
  return spatial * temporal;
}

Eigen::MatrixXd product_space_time_gram(
    const Eigen::MatrixXd& points, const Eigen::VectorXd& times,
    const ProductSpaceTimeKernelParams& params) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd gram(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    gram(i, i) = params.spatial.variance * params.temporal.variance;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = product_space_time_kernel(points.row(i), times(i),
                                                 points.row(j), times(j),
                                                 params);
      gram(i, j) = v;
      gram(j, i) = v;
    }
  }
  return gram;
}

Eigen::MatrixXd product_space_time_cross(
    const Eigen::MatrixXd& a_points, const Eigen::VectorXd& a_times,
    const Eigen::MatrixXd& b_points, const Eigen::VectorXd& b_times,
    const ProductSpaceTimeKernelParams& params) {
  Eigen::MatrixXd cross(a_points.rows(), b_points.rows());
  for (Eigen::Index i = 0; i < a_points.rows(); ++i) {
    for (Eigen::Index j = 0; j < b_points.rows(); ++j) {
      cross(i, j) = product_space_time_kernel(a_points.row(i), a_times(i),
                                              b_points.row(j), b_times(j),
                                              params);
    }
  }
  return cross;
}

CovariateScaler::CovariateScaler(Eigen::VectorXd lo, Eigen::VectorXd hi)
    : lo_(std::move(lo)), hi_(std::move(hi)) {
  if (lo_.size() != hi_.size()) {
    throw std::invalid_argument("CovariateScaler: lo/hi size mismatch");
  }
  for (Eigen::Index i = 0; i < lo_.size(); ++i) {
    if (!(hi_(i) > lo_(i))) {
      throw std::invalid_argument("CovariateScaler: requires hi > lo");
    }
  }
}

double CovariateScaler::rescale_one(Eigen::Index i, double raw) const {
  const double clamped = std::min(std::max(raw, lo_(i)), hi_(i));
  return -1.0 + 2.0 * (clamped - lo_(i)) / (hi_(i) - lo_(i));
}

Eigen::VectorXd CovariateScaler::rescale(const Eigen::VectorXd& raw) const {
  if (raw.size() != lo_.size()) {
    throw std::invalid_argument("CovariateScaler: dimension mismatch");
  }
  Eigen::VectorXd out(raw.size());
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    out(i) = rescale_one(i, raw(i));
  }
  return out;
}

}  // namespace driftbo
