#include "driftbo/trust_region.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace driftbo {

void TrustRegionConfig::validate() const {
  if (!(length_init > 0.0) || !(length_min > 0.0) || !(length_max > 0.0)) {
    throw std::invalid_argument("TrustRegionConfig: lengths must be > 0");
  }
  if (length_min > length_max) {
    throw std::invalid_argument("TrustRegionConfig: length_min > length_max");
  }
  if (success_tolerance < 1 || failure_tolerance < 1) {
    throw std::invalid_argument("TrustRegionConfig: tolerances must be >= 1");
  }
}

TrustRegionState make_trust_region(const Eigen::VectorXd& center,
                                   double best_value,
                                   const TrustRegionConfig& config) {
  config.validate();
  TrustRegionState state;
  state.center = center;
  state.weights = Eigen::VectorXd::Ones(center.size());
  state.length = config.length_init;
  state.best_value = best_value;
  state.config = config;
  return state;
}

TrustRegionBounds trust_region_bounds(const TrustRegionState& state) {
  TrustRegionBounds bounds;
  const Eigen::VectorXd half =
      0.5 * state.length * state.weights;
  bounds.lower = state.center - half;
  bounds.upper = state.center + half;
  return bounds;
}

TrustRegionState update_trust_region(const TrustRegionState& state,
                                     const Eigen::VectorXd& batch_values) {
  if (batch_values.size() == 0) {
    throw std::invalid_argument("update_trust_region: empty batch");
  }
  TrustRegionState next = state;
  const double batch_max = batch_values.maxCoeff();
  const double threshold =
      state.best_value + 1e-3 * std::abs(state.best_value);
  const bool success = batch_max > threshold;
  next.best_value = std::max(state.best_value, batch_max);
  if (success) {
    next.success_count = state.success_count + 1;
    next.failure_count = 0;
  } else {
    next.success_count = 0;
    next.failure_count = state.failure_count + 1;
  }
  if (next.success_count == state.config.success_tolerance) {
    next.length = std::min(2.0 * next.length, state.config.length_max);
    next.success_count = 0;
  }
  if (next.failure_count == state.config.failure_tolerance) {
    next.length = 0.5 * next.length;
    next.failure_count = 0;
  }
  next.restart_pending = next.length < state.config.length_min;
  return next;
}

TrustRegionState restart_trust_region(const TrustRegionState& state,
                                      const Eigen::VectorXd& new_center,
                                      double new_best_value) {
  if (!state.restart_pending) {
    throw std::logic_error("restart_trust_region: restart flag not set");
  }
  TrustRegionState next = state;
  next.center = new_center;
  next.length = state.config.length_init;
  next.success_count = 0;
  next.failure_count = 0;
  next.best_value = new_best_value;
  next.restart_pending = false;
  return next;
}

}  // namespace driftbo
