#include <doctest.h>

#include <cmath>
#include <set>

#include "driftbo/trust_region.hpp"

using namespace driftbo;

namespace {

TrustRegionConfig golden_config() {
  TrustRegionConfig cfg;
  cfg.length_init = 0.8;
  cfg.length_min = 0.0078125;
  cfg.length_max = 1.6;
  cfg.success_tolerance = 3;
  cfg.failure_tolerance = 2;
  return cfg;
}

Eigen::VectorXd one(double v) {
  return Eigen::VectorXd::Constant(1, v);
}

// 50-event tape and its hand-derived trajectory. Events 9 and 10 hit the
// 1e-3 |y*| threshold boundary: 1.0005 against y* = 1 fails (threshold
// 1.001), and the exact-threshold value fails while still updating y*.
constexpr double kTapeValues[] = {
    0.515, 0.53015, 0.5454515, 0.560906015, 0.57651507515, 0.5922802259015,
    0.4922802259015, 0.608203028160515, 1.0, 1.0005, 1.0015005, 0.9015005,
    0.9015005, 1.021515505, 1.04173066005, 0.94173066005, 1.0621479666505,
    0.9621479666505, 0.9621479666505, 0.9621479666505, 1.082769446317005,
    0.982769446317005, 0.982769446317005, 0.982769446317005,
    0.982769446317005, 1.103597140780175, 1.124633112187977,
    1.1458794433098565, 1.0458794433098566, 1.0458794433098566,
    1.0458794433098566, 1.0458794433098566, 1.0458794433098566,
    1.0458794433098566, 1.0458794433098566, 1.0458794433098566, 0.919,
    0.93819, 0.9575719, 0.8575719, 0.8575719, 0.977147619, 0.877147619,
    0.99691909519, 1.0168882861419, 1.0179051744280418, 0.9179051744280419,
    1.0380842261723222, 0.9380842261723223, 0.9380842261723223};
constexpr double kGoldenL[] = {
    0.8, 0.8, 1.6, 1.6, 1.6, 1.6, 1.6, 1.6, 1.6, 1.6, 0.8, 0.8, 0.4, 0.4,
    0.4, 0.4, 0.4, 0.4, 0.2, 0.2, 0.2, 0.2, 0.1, 0.1, 0.05, 0.05, 0.05, 0.1,
    0.1, 0.05, 0.05, 0.025, 0.025, 0.0125, 0.0125, 0.00625, 0.8, 0.8, 1.6,
    1.6, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8, 0.4, 0.4, 0.4, 0.2};
constexpr double kGoldenBest[] = {
    0.515, 0.53015, 0.5454515, 0.560906015, 0.57651507515, 0.5922802259015,
    0.5922802259015, 0.608203028160515, 1.0, 1.0005, 1.0015005, 1.0015005,
    1.0015005, 1.021515505, 1.04173066005, 1.04173066005, 1.0621479666505,
    1.0621479666505, 1.0621479666505, 1.0621479666505, 1.082769446317005,
    1.082769446317005, 1.082769446317005, 1.082769446317005,
    1.082769446317005, 1.103597140780175, 1.124633112187977,
    1.1458794433098565, 1.1458794433098565, 1.1458794433098565,
    1.1458794433098565, 1.1458794433098565, 1.1458794433098565,
    1.1458794433098565, 1.1458794433098565, 1.1458794433098565, 0.919,
    0.93819, 0.9575719, 0.9575719, 0.9575719, 0.977147619, 0.977147619,
    0.99691909519, 1.0168882861419, 1.0179051744280418, 1.0179051744280418,
    1.0380842261723222, 1.0380842261723222, 1.0380842261723222};
constexpr int kGoldenNs[] = {1, 2, 0, 1, 2, 0, 0, 1, 2, 0, 0, 0, 0, 1, 2, 0,
                             1, 0, 0, 0, 1, 0, 0, 0, 0, 1, 2, 0, 0, 0, 0, 0,
                             0, 0, 0, 0, 1, 2, 0, 0, 0, 1, 0, 1, 2, 0, 0, 1,
                             0, 0};
constexpr int kGoldenNf[] = {0, 0, 0, 0, 0, 0, 1, 0, 0, 1, 0, 1, 0, 0, 0, 1,
                             0, 1, 0, 1, 0, 1, 0, 1, 0, 0, 0, 0, 1, 0, 1, 0,
                             1, 0, 1, 0, 0, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0,
                             1, 0};
constexpr int kGoldenRestart[] = {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0,
                                  0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0,
                                  0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0,
                                  0, 0, 0, 0, 0, 0, 0, 0};

}  // namespace

TEST_CASE("trust region bounds closed forms") {
  TrustRegionConfig cfg = golden_config();
  Eigen::VectorXd center = Eigen::VectorXd::Zero(4);
  TrustRegionState state = make_trust_region(center, 0.0, cfg);
  state.length = 0.8;
  const TrustRegionBounds bounds = trust_region_bounds(state);
  for (int j = 0; j < 4; ++j) {
    CHECK(bounds.lower(j) == doctest::Approx(-0.4).epsilon(1e-15));
    CHECK(bounds.upper(j) == doctest::Approx(0.4).epsilon(1e-15));
  }
  // Doubling L doubles the widths exactly; L -> 0 degenerates to the center.
  state.length = 1.6;
  const TrustRegionBounds wide = trust_region_bounds(state);
  CHECK((wide.upper - wide.lower).maxCoeff() ==
        doctest::Approx(2.0 * (bounds.upper - bounds.lower).maxCoeff()));
  state.length = 0.0;
  const TrustRegionBounds degenerate = trust_region_bounds(state);
  CHECK((degenerate.upper - degenerate.lower).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fifty-event golden trajectory") {
  TrustRegionConfig cfg = golden_config();
  TrustRegionState state = make_trust_region(one(0.0), 0.5, cfg);
  for (int i = 0; i < 50; ++i) {
    if (i == 36) {
      // Scripted restart after the flag fired at event 35; the incumbent is
      // re-scored under the current slice at 0.9.
      state = restart_trust_region(state, one(0.0), 0.9);
      CHECK(state.length == cfg.length_init);
      CHECK(state.success_count == 0);
      CHECK(state.failure_count == 0);
      CHECK(state.best_value == 0.9);
    }
    state = update_trust_region(state, one(kTapeValues[i]));
    CAPTURE(i);
    CHECK(state.length == doctest::Approx(kGoldenL[i]).epsilon(1e-15));
    CHECK(state.best_value == doctest::Approx(kGoldenBest[i]).epsilon(1e-15));
    CHECK(state.success_count == kGoldenNs[i]);
    CHECK(state.failure_count == kGoldenNf[i]);
    CHECK(state.restart_pending == (kGoldenRestart[i] == 1));
  }
}

TEST_CASE("threshold boundary arithmetic") {
  TrustRegionConfig cfg = golden_config();
  TrustRegionState state = make_trust_region(one(0.0), 1.0, cfg);
  // 1.0005 is below the 1.001 threshold: failure, but y* still updates.
  state = update_trust_region(state, one(1.0005));
  CHECK(state.failure_count == 1);
  CHECK(state.success_count == 0);
  CHECK(state.best_value == doctest::Approx(1.0005));
  // Negative incumbent: threshold is y* + 1e-3 |y*| = -1.998.
  TrustRegionState negative = make_trust_region(one(0.0), -2.0, cfg);
  negative = update_trust_region(negative, one(-1.997));
  CHECK(negative.success_count == 1);  // -1.997 > -1.998
  CHECK(negative.best_value == doctest::Approx(-1.997));
  negative = update_trust_region(negative, one(-1.996));
  CHECK(negative.failure_count == 1);  // below -1.997 + 0.001997
  CHECK(negative.best_value == doctest::Approx(-1.996));  // max still applies
}

TEST_CASE("length values stay on the dyadic ladder and y* is monotone") {
  TrustRegionConfig cfg = golden_config();
  std::set<double> allowed;
  for (double l = cfg.length_init; l >= cfg.length_min / 2.0; l /= 2.0) {
    allowed.insert(l);
  }
  for (double l = cfg.length_init; l <= cfg.length_max; l *= 2.0) {
    allowed.insert(l);
  }
  driftbo::Rng rng(99);
  TrustRegionState state = make_trust_region(one(0.0), 0.0, cfg);
  double prev_best = state.best_value;
  for (int i = 0; i < 200 && !state.restart_pending; ++i) {
    state = update_trust_region(state, one(rng.uniform(-0.2, 0.4)));
    CHECK(allowed.count(state.length) == 1);
    CHECK(state.best_value >= prev_best);
    prev_best = state.best_value;
    // Counters are never both positive.
    CHECK((state.success_count == 0 || state.failure_count == 0));
  }
}

TEST_CASE("restart requires the pending flag") {
  TrustRegionConfig cfg = golden_config();
  TrustRegionState state = make_trust_region(one(0.0), 0.0, cfg);
  CHECK_THROWS_AS(restart_trust_region(state, one(1.0), 0.5),
                  std::logic_error);
}

TEST_CASE("empty batch is rejected") {
  TrustRegionConfig cfg = golden_config();
  TrustRegionState state = make_trust_region(one(0.0), 0.0, cfg);
  CHECK_THROWS_AS(update_trust_region(state, Eigen::VectorXd()),
                  std::invalid_argument);
}
