#pragma once

#include <Eigen/Core>

#include "driftbo/rng.hpp"

namespace driftbo {

struct TrustRegionConfig {
  double length_init = 0.8;
  double length_min = 0.0078125;  // 2^-7
  double length_max = 1.6;
  int success_tolerance = 3;
  int failure_tolerance = 2;  // ceil(max(4, d) / batch) at the default scale

  void validate() const;
};

// Incumbent-centered hyper-rectangle with success/failure counters. The
// optimizer owns center placement; this state machine owns the counters, the
// length and the incumbent value.
struct TrustRegionState {
  Eigen::VectorXd center;   // kappa
  Eigen::VectorXd weights;  // omega, per-dimension box weights
  double length = 0.8;      // L
  int success_count = 0;
  int failure_count = 0;
  double best_value = 0.0;  // y*
  bool restart_pending = false;
  TrustRegionConfig config;
};

TrustRegionState make_trust_region(const Eigen::VectorXd& center,
                                   double best_value,
                                   const TrustRegionConfig& config);

struct TrustRegionBounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

// [kappa - omega L / 2, kappa + omega L / 2] per dimension.
TrustRegionBounds trust_region_bounds(const TrustRegionState& state);

// Success iff max(batch) > y* + 1e-3 |y*|; y* <- max(y*, max(batch)).
// Counter and length updates per the TuRBO-1 rules; sets restart_pending
// when the length falls below the minimum.
TrustRegionState update_trust_region(const TrustRegionState& state,
                                     const Eigen::VectorXd& batch_values);

// Resets length and counters, recentering on the given incumbent whose value
// under the current objective slice is new_best_value.
TrustRegionState restart_trust_region(const TrustRegionState& state,
                                      const Eigen::VectorXd& new_center,
                                      double new_best_value);

}  // namespace driftbo
