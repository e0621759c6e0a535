#pragma once

#include <Eigen/Core>

namespace driftbo {

// Squared-exponential kernel hyperparameters.
struct SEKernelParams {
  double variance = 1.0;     // amplitude squared
  double lengthscale = 1.0;  // in covariate units

  // Throws std::invalid_argument if either entry is non-positive or
  // non-finite.
  void validate() const;
};

// Laplacian-eigenfunction basis on the interval [-J, J] with Dirichlet
// boundary conditions.
struct HilbertBasisConfig {
  int num_features = 128;           // M
  double domain_half_width = 2.55;  // J

  void validate() const;
};

// Product kernel over (spatial feature, normalized time) pairs.
struct ProductSpaceTimeKernelParams {
  SEKernelParams spatial;
  SEKernelParams temporal;

  void validate() const;
};

// k(c, c') = variance * exp(-(c - c')^2 / (2 lengthscale^2))
double se_kernel(double c, double c_prime, const SEKernelParams& params);

// Isotropic SE over row vectors: variance * exp(-|a-b|^2 / (2 ell^2)).
double se_kernel_nd(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b,
                    const SEKernelParams& params);

// s(omega) = variance * lengthscale * sqrt(2 pi) * exp(-ell^2 omega^2 / 2)
double se_spectral_density(double omega, const SEKernelParams& params);

struct HilbertEigenpair {
  double eigenfunction;  // phi_m(c)
  double eigenvalue;     // lambda_m
};

// phi_m(c) = sin(pi m (c + J) / (2J)) / sqrt(J),  lambda_m = (pi m / (2J))^2.
// Requires 1 <= m and |c| < J; violations throw std::invalid_argument /
// std::domain_error.
HilbertEigenpair hilbert_eigenpair(int m, double c,
                                   const HilbertBasisConfig& config);

struct HilbertFeatures {
  Eigen::VectorXd phi;         // phi_m(c), m = 1..M
  Eigen::VectorXd prior_diag;  // s_se(sqrt(lambda_m))
};

// Feature vector and diagonal prior variances at a single covariate value.
HilbertFeatures hilbert_features(double c, const SEKernelParams& params,
                                 const HilbertBasisConfig& config);

// Pieces of hilbert_features used separately by the latent model.
Eigen::VectorXd hilbert_phi(double c, const HilbertBasisConfig& config);
Eigen::VectorXd hilbert_eigenvalues(const HilbertBasisConfig& config);
Eigen::VectorXd hilbert_prior_diag(const SEKernelParams& params,
                                   const HilbertBasisConfig& config);

// Reduced-rank kernel value sum_m prior_diag[m] phi_m(c) phi_m(c').
double hilbert_approx_kernel(double c, double c_prime,
                             const SEKernelParams& params,
                             const HilbertBasisConfig& config);

// Pulls covariate values that landed exactly on the domain boundary back
// inside by 1e-9 so that feature evaluation stays defined. Values strictly
// inside are returned unchanged; values beyond the boundary are clamped too
// (this is the normalization path, which should already keep |c| <= 1).
double clamp_into_domain(double c, const HilbertBasisConfig& config);

// k((x,t),(x',t')) = k_spatial(x, x') * k_temporal(t, t')
double product_space_time_kernel(const Eigen::RowVectorXd& xa, double ta,
                                 const Eigen::RowVectorXd& xb, double tb,
                                 const ProductSpaceTimeKernelParams& params);

// Gram matrix of the product kernel on rows of (points, times).
Eigen::MatrixXd product_space_time_gram(const Eigen::MatrixXd& points,
                                        const Eigen::VectorXd& times,
                                        const ProductSpaceTimeKernelParams& params);

// Cross-covariance between two sets of (point, time) rows.
Eigen::MatrixXd product_space_time_cross(const Eigen::MatrixXd& a_points,
                                         const Eigen::VectorXd& a_times,
                                         const Eigen::MatrixXd& b_points,
                                         const Eigen::VectorXd& b_times,
                                         const ProductSpaceTimeKernelParams& params);

// Affine per-covariate rescaling onto [-1, 1]. The constants are fixed when
// the scaler is constructed and persist with the model checkpoint. Raw values
// outside [lo, hi] are clamped before mapping.
class CovariateScaler {
 public:
  CovariateScaler() = default;
  CovariateScaler(Eigen::VectorXd lo, Eigen::VectorXd hi);

  Eigen::Index dimension() const { return lo_.size(); }
  const Eigen::VectorXd& lower() const { return lo_; }
  const Eigen::VectorXd& upper() const { return hi_; }

  // Maps raw covariates to [-1, 1] per dimension.
  Eigen::VectorXd rescale(const Eigen::VectorXd& raw) const;
  double rescale_one(Eigen::Index i, double raw) const;

 private:
  Eigen::VectorXd lo_;
  Eigen::VectorXd hi_;
};

}  // namespace driftbo
