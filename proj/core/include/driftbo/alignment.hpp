#pragma once

#include <vector>

#include <Eigen/Core>

#include "driftbo/ad.hpp"
#include "driftbo/design.hpp"
#include "driftbo/latent_model.hpp"

namespace driftbo {

struct AlignmentBatch {
  Eigen::MatrixXd latents;  // N x d
  Eigen::VectorXd values;   // N
  Eigen::VectorXd weights;  // N, in (0, 1]

  void validate() const;  // throws std::invalid_argument
};

struct InversionConfig {
  double step_size = 0.05;        // eta
  int max_steps = 200;            // T_inv
  double distance_tolerance = 0.05;  // epsilon, in normalized edit distance

  void validate() const;
};

// w_i = 1 - Phi((y_q - y_i) / smoothing), y_q the empirical q-quantile
// (nearest rank). Monotone in y_i, all entries in (0, 1).
Eigen::VectorXd importance_weights(const Eigen::VectorXd& values,
                                   double quantile, double smoothing);

// Default weighting: q = 0.5, smoothing = sample std floored at 1e-6.
Eigen::VectorXd default_importance_weights(const Eigen::VectorXd& values);

// Weighted hinge on pairwise slopes above their median. Ordered pairs with
// i == j contribute zero and are excluded from the median. Coincident latents
// with distinct values take the largest finite slope in the batch and set
// *coincident_warning.
double lipschitz_loss(const AlignmentBatch& batch,
                      bool* coincident_warning = nullptr);

// | mean over all N^2 ordered pairs (diagonal included) of |z_i - z_j| - c_d |
// with c_d = 2 Gamma((d+1)/2) / Gamma(d/2).
double latent_scale_loss(const Eigen::MatrixXd& latents);

// Expected distance between two standard normal vectors in dimension d.
double expected_normal_pair_distance(int d);

// Graph versions used inside the representation-update objective; values and
// weights enter as constants, gradients flow into `latents`.
ad::Var lipschitz_loss_graph(ad::Graph& graph, ad::Var latents,
                             const Eigen::VectorXd& values,
                             const Eigen::VectorXd& weights);
ad::Var latent_scale_loss_graph(ad::Graph& graph, ad::Var latents);

struct InversionResult {
  LatentCode code;
  bool converged = false;
  int steps_used = 0;
};

// Gradient descent on the length-normalized token negative log-likelihood,
// z <- z - eta * grad, stopping early once decode_argmax(z) is within the
// distance tolerance of x. A non-finite loss aborts and returns z_init with
// converged = false.
InversionResult invert_latent(const DesignSequence& x, const LatentCode& z_init,
                              DecoderParams& theta,
                              const InversionConfig& config);

// Row-parallel variant; each row follows the trajectory the single-design
// call would take (up to floating-point association).
std::vector<InversionResult> invert_latent_batch(
    const std::vector<DesignSequence>& designs, const Eigen::MatrixXd& z_init,
    DecoderParams& theta, const InversionConfig& config);

}  // namespace driftbo
