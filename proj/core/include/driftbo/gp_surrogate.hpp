#pragma once

#include <vector>

#include <Eigen/Core>

#include "driftbo/ad.hpp"
#include "driftbo/kernels.hpp"
#include "driftbo/rng.hpp"

namespace driftbo {

// Aligned (latent, normalized time, observation) triples.
struct SurrogateDataset {
  Eigen::MatrixXd latents;  // n x d
  Eigen::VectorXd times;    // n, in [0, 1]
  Eigen::VectorXd values;   // n

  Eigen::Index size() const { return values.size(); }
  void validate() const;
};

struct PredictiveGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

// Exact GP regression with the product spatio-temporal kernel, used as the
// small-instance oracle. `data.latents` rows are used directly as kernel
// inputs; apply any feature map before calling. Empty data returns the prior.
PredictiveGaussian exact_gp_posterior(const SurrogateDataset& data,
                                      const Eigen::MatrixXd& query_points,
                                      const Eigen::VectorXd& query_times,
                                      const ProductSpaceTimeKernelParams& kernel,
                                      double noise_variance);

struct SVGPConfig {
  int num_inducing = 64;
  int feature_hidden = 64;
  int feature_out = 16;
  bool use_time = true;  // drop the temporal kernel factor when false
  double init_noise_variance = 1e-2;
  double init_spatial_lengthscale = 1.0;
  double init_temporal_lengthscale = 0.1;

  void validate() const;
};

struct SVGPFitResult {
  double initial_elbo = 0.0;
  double final_elbo = 0.0;
  bool rolled_back = false;  // soft-monotonicity rollback applied
  int steps_run = 0;
};

// Sparse variational GP over (feature map(z), time) with a whitened
// variational parameterization and inducing inputs optimized jointly.
class SpatioTemporalSVGP {
 public:
  SpatioTemporalSVGP(SVGPConfig config, int latent_dim, Rng& rng);

  const SVGPConfig& config() const { return config_; }
  int latent_dim() const { return latent_dim_; }
  int joint_dim() const {
    return config_.feature_out + (config_.use_time ? 1 : 0);
  }

  // Learned feature map applied row-wise (plain evaluation path).
  Eigen::MatrixXd map_features(const Eigen::MatrixXd& latents) const;
  // Feature rows concatenated with the time column when enabled.
  Eigen::MatrixXd joint_inputs(const Eigen::MatrixXd& latents,
                               const Eigen::VectorXd& times) const;

  // Current kernel hyperparameters (temporal variance is fixed at 1).
  ProductSpaceTimeKernelParams kernel_params() const;
  double noise_variance() const;
  const Eigen::MatrixXd& inducing_inputs() const {
    return inducing_.value;
  }
  Eigen::VectorXd variational_mean() const { return mean_.value.col(0); }
  // Lower-triangular factor with strictly positive diagonal.
  Eigen::MatrixXd variational_chol() const;

  // k-means++ seeding of the inducing inputs over the current joint inputs;
  // also resets the variational distribution to the whitened prior.
  void initialize_inducing(const SurrogateDataset& data, Rng& rng);
  void reset_variational();

  // KL(q(g_U) || p(g_U)) in the whitened parameterization.
  double variational_kl() const;

  // Sets the whitened variational distribution so the SVGP predictive equals
  // the exact posterior when the inducing inputs coincide with the training
  // inputs (oracle-equivalence path used in tests).
  void set_variational_from_exact(const SurrogateDataset& data);

  // ELBO fragment over a subset of rows; `latents` may be a constant or a
  // differentiable variable (joint representation updates). Scaled for
  // minibatching by full_count / rows.
  ad::Var elbo_fragment(ad::Graph& graph, ad::Var latents,
                        const Eigen::VectorXd& times,
                        const Eigen::VectorXd& values, int full_count,
                        bool trainable);

  // Full-dataset ELBO value (no gradients).
  double elbo_value(const SurrogateDataset& data);

  // ELBO with gradients accumulated into the surrogate parameters.
  double elbo_with_gradients(const SurrogateDataset& data,
                             const std::vector<int>& minibatch);

  // Stochastic fit with divergence rollback and a soft monotonicity check:
  // if the final full-data ELBO drops more than 5% below the initial one the
  // initial state is restored.
  SVGPFitResult fit(const SurrogateDataset& data, int steps,
                    double learning_rate, int minibatch_size, Rng& rng);

  // Joint predictive at query latents for a single shared time.
  PredictiveGaussian predict(const Eigen::MatrixXd& query_latents,
                             double query_time) const;
  PredictiveGaussian predict(const Eigen::MatrixXd& query_latents,
                             const Eigen::VectorXd& query_times) const;

  // Joint posterior samples over the candidates at the given time, one draw
  // per row. Exact duplicate candidates receive identical sample values.
  Eigen::MatrixXd thompson_sample_values(const Eigen::MatrixXd& candidates,
                                         double time_now, int num_draws,
                                         Rng& rng) const;

  // Draws batch_size joint posterior samples and returns the argmax
  // candidate index per draw (ties toward the lowest index).
  std::vector<int> thompson_sample_batch(const Eigen::MatrixXd& candidates,
                                         double time_now, int batch_size,
                                         Rng& rng) const;

  std::vector<ad::Parameter*> params();

 private:
  ad::Var kernel_matrix_graph(ad::Graph& g, ad::Var a, ad::Var b,
                              ad::Var log_sv, ad::Var log_sl, ad::Var log_tl);
  ad::Var features_graph(ad::Graph& g, ad::Var latents, bool trainable);

  SVGPConfig config_;
  int latent_dim_ = 0;

  ad::Parameter w1_, b1_, w2_, b2_, w3_, b3_;
  ad::Parameter inducing_;        // M_u x joint_dim
  ad::Parameter mean_;            // M_u x 1 (whitened)
  ad::Parameter chol_raw_;        // M_u x M_u; diag stores log values
  ad::Parameter log_spatial_variance_;
  ad::Parameter log_spatial_lengthscale_;
  ad::Parameter log_temporal_lengthscale_;
  ad::Parameter noise_raw_;  // sigma_y^2 = 1e-6 + exp(raw)
};

}  // namespace driftbo
