#include <doctest.h>

#include <cmath>
#include <vector>

#include "driftbo/alignment.hpp"
#include "driftbo/rng.hpp"
#include "driftbo/stats.hpp"

using namespace driftbo;

namespace {

DesignSequence seq(std::initializer_list<int> tokens) {
  DesignSequence x;
  x.tokens = tokens;
  return x;
}

// Independent enumeration of the weighted Lipschitz hinge used as the test
// oracle: collects ordered-pair slopes, applies the coincident rule, takes
// the even-count median, then sums hinge terms.
double lipschitz_brute_force(const Eigen::MatrixXd& z,
                             const Eigen::VectorXd& y,
                             const Eigen::VectorXd& w) {
  const int n = static_cast<int>(z.rows());
  std::vector<double> slopes;
  std::vector<std::pair<int, int>> pairs;
  double largest = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      pairs.emplace_back(i, j);
      const double dist = (z.row(i) - z.row(j)).norm();
      if (dist > 0.0) {
        slopes.push_back(std::abs(y(i) - y(j)) / dist);
        largest = std::max(largest, slopes.back());
      } else {
        slopes.push_back(std::abs(y(i) - y(j)) > 0.0 ? -1.0 : 0.0);
      }
    }
  }
  for (double& s : slopes) {
    if (s < 0.0) s = largest;
  }
  std::vector<double> sorted = slopes;
  std::sort(sorted.begin(), sorted.end());
  const size_t k = sorted.size();
  const double level = (k % 2 == 1)
                           ? sorted[k / 2]
                           : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]);
  double loss = 0.0;
  for (size_t p = 0; p < pairs.size(); ++p) {
    const double excess = slopes[p] - level;
    if (excess > 0.0) {
      loss += std::sqrt(w(pairs[p].first) * w(pairs[p].second)) * excess;
    }
  }
  return loss / (static_cast<double>(n) * n);
}

LatentModel trained_toy_model() {
  LatentModelConfig cfg;
  cfg.alphabet_size = 3;
  cfg.max_length = 4;
  cfg.latent_dim = 3;
  cfg.num_features = 6;
  cfg.time_covariate = false;
  cfg.decoder_hidden = 16;
  cfg.decoder_embed = 6;
  Rng rng(40);
  LatentModel model(cfg, rng);
  std::vector<DesignSequence> corpus;
  Rng crng(41);
  for (int i = 0; i < 12; ++i) {
    DesignSequence x;
    for (int j = 0; j < cfg.max_length; ++j) {
      x.tokens.push_back(crng.uniform_int(cfg.alphabet_size));
    }
    corpus.push_back(std::move(x));
  }
  PretrainConfig pcfg;
  pcfg.steps = 400;
  pcfg.minibatch = 12;
  pcfg.learning_rate = 5e-3;
  Rng trng(42);
  pretrain_latent_model(model, corpus, pcfg, trng);
  return model;
}

}  // namespace

TEST_CASE("importance weights closed forms") {
  Eigen::VectorXd y(5);
  y << 0.1, 0.3, 0.5, 0.7, 0.9;
  const double sigma = 0.2;
  const Eigen::VectorXd w = importance_weights(y, 0.5, sigma);
  // y_q = 0.5 under nearest-rank with q = 0.5 and 5 samples.
  CHECK(w(2) == doctest::Approx(0.5).epsilon(1e-12));
  // One smoothing unit above the quantile.
  CHECK(w(3) == doctest::Approx(0.8413447460685429).epsilon(1e-10));
  for (Eigen::Index i = 0; i < 5; ++i) {
    CHECK(w(i) > 0.0);
    CHECK(w(i) < 1.0);
    if (i > 0) CHECK(w(i) >= w(i - 1));  // monotone in y
  }
  CHECK_THROWS_AS(importance_weights(y, 0.5, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(importance_weights(y, 0.5, -1.0), std::invalid_argument);
}

TEST_CASE("lipschitz loss closed forms") {
  SUBCASE("all values equal means zero loss") {
    AlignmentBatch batch;
    batch.latents = Eigen::MatrixXd::Random(4, 2);
    batch.values = Eigen::VectorXd::Constant(4, 0.7);
    batch.weights = Eigen::VectorXd::Constant(4, 0.5);
    CHECK(lipschitz_loss(batch) == 0.0);
  }
  SUBCASE("two points: single slope is its own median") {
    AlignmentBatch batch;
    batch.latents = Eigen::MatrixXd(2, 1);
    batch.latents << 0.0, 1.0;
    batch.values = Eigen::VectorXd(2);
    batch.values << 0.0, 5.0;
    batch.weights = Eigen::VectorXd::Ones(2);
    CHECK(lipschitz_loss(batch) == 0.0);
  }
  SUBCASE("three-point enumerated example") {
    AlignmentBatch batch;
    batch.latents = Eigen::MatrixXd(3, 1);
    batch.latents << 0.0, 1.0, 3.0;
    batch.values = Eigen::VectorXd(3);
    batch.values << 0.0, 1.0, 1.0;
    batch.weights = Eigen::VectorXd::Ones(3);
    // Slopes {1, 1/3, 0} twice; median 1/3; loss = 2(1 - 1/3)/9 = 4/27.
    CHECK(lipschitz_loss(batch) ==
          doctest::Approx(0.14814814814814814).epsilon(1e-14));
  }
}

TEST_CASE("lipschitz loss matches brute force on random batches") {
  Rng rng(50);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + rng.uniform_int(7);  // N <= 8
    AlignmentBatch batch;
    batch.latents = rng.normal_matrix(n, 3);
    batch.values = rng.normal_vector(n);
    batch.weights = Eigen::VectorXd(n);
    for (int i = 0; i < n; ++i) batch.weights(i) = rng.uniform(0.1, 1.0);
    const double expected =
        lipschitz_brute_force(batch.latents, batch.values, batch.weights);
    CHECK(lipschitz_loss(batch) == doctest::Approx(expected).epsilon(1e-13));
  }
}

TEST_CASE("lipschitz loss invariances and scaling") {
  Rng rng(51);
  AlignmentBatch batch;
  const int n = 6;
  batch.latents = rng.normal_matrix(n, 4);
  batch.values = rng.normal_vector(n);
  batch.weights = Eigen::VectorXd(n);
  for (int i = 0; i < n; ++i) batch.weights(i) = rng.uniform(0.2, 1.0);
  const double base = lipschitz_loss(batch);

  SUBCASE("row permutation invariance") {
    std::vector<int> perm = {3, 0, 5, 1, 4, 2};
    AlignmentBatch shuffled = batch;
    for (int i = 0; i < n; ++i) {
      shuffled.latents.row(i) = batch.latents.row(perm[i]);
      shuffled.values(i) = batch.values(perm[i]);
      shuffled.weights(i) = batch.weights(perm[i]);
    }
    CHECK(lipschitz_loss(shuffled) == doctest::Approx(base).epsilon(1e-12));
  }
  SUBCASE("positive scaling of values scales the loss linearly") {
    for (double lambda : {0.5, 2.0, 7.5}) {
      AlignmentBatch scaled = batch;
      scaled.values *= lambda;
      CHECK(lipschitz_loss(scaled) ==
            doctest::Approx(lambda * base).epsilon(1e-10));
    }
  }
}

TEST_CASE("coincident latents take the largest finite slope and warn") {
  AlignmentBatch batch;
  batch.latents = Eigen::MatrixXd(3, 2);
  batch.latents << 0.0, 0.0, 0.0, 0.0, 1.0, 0.0;
  batch.values = Eigen::VectorXd(3);
  batch.values << 0.0, 1.0, 0.5;  // rows 0, 1 coincide with distinct values
  batch.weights = Eigen::VectorXd::Ones(3);
  bool warning = false;
  const double loss = lipschitz_loss(batch, &warning);
  CHECK(warning);
  CHECK(loss == doctest::Approx(lipschitz_brute_force(
                    batch.latents, batch.values, batch.weights))
                    .epsilon(1e-13));
}

TEST_CASE("latent scale constant against gamma and MC") {
  CHECK(expected_normal_pair_distance(1) ==
        doctest::Approx(1.1283791670955126).epsilon(1e-12));
  CHECK(expected_normal_pair_distance(2) ==
        doctest::Approx(1.7724538509055159).epsilon(1e-12));
  CHECK(expected_normal_pair_distance(8) ==
        doctest::Approx(3.8772427988558162).epsilon(1e-12));
  // MC cross-check for d = 2 within 3 standard errors.
  Rng rng(52);
  const int n = 1000000;
  double acc = 0.0;
  double acc_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double dx = rng.normal() - rng.normal();
    const double dy = rng.normal() - rng.normal();
    const double dist = std::sqrt(dx * dx + dy * dy);
    acc += dist;
    acc_sq += dist * dist;
  }
  const double mean = acc / n;
  const double se = std::sqrt((acc_sq / n - mean * mean) / n);
  CHECK(std::abs(mean - expected_normal_pair_distance(2)) < 3.0 * se);
}

TEST_CASE("latent scale loss closed forms and rotation invariance") {
  SUBCASE("identical latents give exactly c_d") {
    Eigen::MatrixXd z = Eigen::MatrixXd::Constant(5, 3, 0.42);
    CHECK(latent_scale_loss(z) == expected_normal_pair_distance(3));
  }
  SUBCASE("rigid rotation invariance") {
    Rng rng(53);
    Eigen::MatrixXd z = rng.normal_matrix(7, 2);
    const double theta = 0.83;
    Eigen::Matrix2d rot;
    rot << std::cos(theta), -std::sin(theta), std::sin(theta),
        std::cos(theta);
    Eigen::MatrixXd rotated = z * rot.transpose();
    CHECK(latent_scale_loss(rotated) ==
          doctest::Approx(latent_scale_loss(z)).epsilon(1e-12));
  }
}

TEST_CASE("graph losses match plain values and finite differences") {
  Rng rng(54);
  const int n = 5;
  ad::Parameter z(rng.normal_matrix(n, 3), "z");
  Eigen::VectorXd y = rng.normal_vector(n);
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w(i) = rng.uniform(0.2, 1.0);

  SUBCASE("values agree with the plain implementations") {
    ad::Graph g;
    AlignmentBatch batch{z.value, y, w};
    CHECK(lipschitz_loss_graph(g, g.param(z), y, w).scalar() ==
          doctest::Approx(lipschitz_loss(batch)).epsilon(1e-12));
    CHECK(latent_scale_loss_graph(g, g.param(z)).scalar() ==
          doctest::Approx(latent_scale_loss(z.value)).epsilon(1e-12));
  }

  SUBCASE("gradients match finite differences") {
    auto loss = [&](bool backward) {
      ad::Graph g;
      ad::Var total = g.add(lipschitz_loss_graph(g, g.param(z), y, w),
                            latent_scale_loss_graph(g, g.param(z)));
      if (backward) g.backward(total);
      return total.scalar();
    };
    z.zero_grad();
    (void)loss(true);
    double worst = 0.0;
    const double eps = 1e-6;
    for (Eigen::Index i = 0; i < z.value.rows(); ++i) {
      for (Eigen::Index j = 0; j < z.value.cols(); ++j) {
        const double saved = z.value(i, j);
        z.value(i, j) = saved + eps;
        const double up = loss(false);
        z.value(i, j) = saved - eps;
        const double down = loss(false);
        z.value(i, j) = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double scale =
            std::max({std::abs(numeric), std::abs(z.grad(i, j)), 1e-8});
        worst = std::max(worst, std::abs(numeric - z.grad(i, j)) / scale);
      }
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("inversion stops immediately when already aligned") {
  LatentModel model = trained_toy_model();
  Rng rng(55);
  const LatentCode z = rng.normal_vector(3);
  const DesignSequence already = decode_argmax(z, model.decoder());
  InversionConfig cfg;
  const InversionResult r = invert_latent(already, z, model.decoder(), cfg);
  CHECK(r.converged);
  CHECK(r.steps_used == 0);
  CHECK((r.code - z).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero step size leaves the code unchanged") {
  LatentModel model = trained_toy_model();
  Rng rng(56);
  const LatentCode z = rng.normal_vector(3);
  DesignSequence target = decode_argmax(z, model.decoder());
  // Perturb the target so the stopping rule cannot fire at step zero.
  target.tokens[0] = (target.tokens[0] + 1) % 3;
  target.tokens[2] = (target.tokens[2] + 1) % 3;
  InversionConfig cfg;
  cfg.step_size = 0.0;
  cfg.max_steps = 7;
  cfg.distance_tolerance = 0.0;
  const InversionResult r = invert_latent(target, z, model.decoder(), cfg);
  CHECK_FALSE(r.converged);
  CHECK(r.steps_used == 7);
  CHECK((r.code - z).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("small-step inversion does not increase the loss") {
  LatentModel model = trained_toy_model();
  Rng rng(57);
  int improved = 0;
  for (int trial = 0; trial < 20; ++trial) {
    DesignSequence x;
    for (int j = 0; j < 4; ++j) x.tokens.push_back(rng.uniform_int(3));
    const LatentCode z0 = rng.normal_vector(3);
    InversionConfig cfg;
    cfg.step_size = 1e-3;
    cfg.max_steps = 25;
    cfg.distance_tolerance = 0.0;  // never stops early short of exactness
    const InversionResult r = invert_latent(x, z0, model.decoder(), cfg);
    const double before = -decoder_log_likelihood(x, z0, model.decoder());
    const double after = -decoder_log_likelihood(x, r.code, model.decoder());
    if (after <= before + 1e-12) ++improved;
  }
  CHECK(improved == 20);
}

TEST_CASE("converged inversion satisfies the stopping distance") {
  LatentModel model = trained_toy_model();
  Rng rng(58);
  InversionConfig cfg;
  cfg.step_size = 0.05;
  cfg.max_steps = 200;
  cfg.distance_tolerance = 0.3;
  for (int trial = 0; trial < 10; ++trial) {
    DesignSequence x;
    for (int j = 0; j < 4; ++j) x.tokens.push_back(rng.uniform_int(3));
    const LatentCode z0 = rng.normal_vector(3);
    const InversionResult r = invert_latent(x, z0, model.decoder(), cfg);
    if (r.converged) {
      const DesignSequence decoded = decode_argmax(r.code, model.decoder());
      CHECK(design_distance(x, decoded) <= cfg.distance_tolerance);
    }
  }
}

TEST_CASE("batched inversion tracks per-design trajectories") {
  LatentModel model = trained_toy_model();
  Rng rng(59);
  const int n = 6;
  std::vector<DesignSequence> designs;
  Eigen::MatrixXd z0(n, 3);
  for (int i = 0; i < n; ++i) {
    DesignSequence x;
    for (int j = 0; j < 4; ++j) x.tokens.push_back(rng.uniform_int(3));
    designs.push_back(std::move(x));
    z0.row(i) = rng.normal_vector(3).transpose();
  }
  InversionConfig cfg;
  cfg.step_size = 0.03;
  cfg.max_steps = 40;
  cfg.distance_tolerance = 0.25;
  const std::vector<InversionResult> batch =
      invert_latent_batch(designs, z0, model.decoder(), cfg);
  for (int i = 0; i < n; ++i) {
    const InversionResult single =
        invert_latent(designs[static_cast<size_t>(i)], z0.row(i).transpose(),
                      model.decoder(), cfg);
    CHECK(batch[static_cast<size_t>(i)].converged == single.converged);
    CHECK(batch[static_cast<size_t>(i)].steps_used == single.steps_used);
    CHECK((batch[static_cast<size_t>(i)].code - single.code)
              .cwiseAbs()
              .maxCoeff() < 1e-9);
  }
}

TEST_CASE("non-finite inversion loss aborts with the initial code") {
  LatentModel model = trained_toy_model();
  model.decoder().out_w.value.array() = 1e308;  // forces non-finite logits
  Rng rng(60);
  const LatentCode z0 = rng.normal_vector(3);
  DesignSequence x = seq({0, 1, 2, 0});
  InversionConfig cfg;
  const InversionResult r = invert_latent(x, z0, model.decoder(), cfg);
  CHECK_FALSE(r.converged);
  CHECK((r.code - z0).cwiseAbs().maxCoeff() == 0.0);
}
