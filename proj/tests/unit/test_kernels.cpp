#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "driftbo/kernels.hpp"
#include "driftbo/linalg.hpp"
#include "driftbo/rng.hpp"

using namespace driftbo;

TEST_CASE("se_kernel closed-form values") {
  SEKernelParams p{2.0, 0.5};
  CHECK(se_kernel(0.3, 0.3, p) == doctest::Approx(2.0).epsilon(1e-14));
  SEKernelParams unit{1.0, 1.0};
  CHECK(se_kernel(0.0, 1.0, unit) ==
        doctest::Approx(0.6065306597126334).epsilon(1e-12));
  SEKernelParams narrow{1.0, 0.1};
  CHECK(se_kernel(0.0, 10.0, narrow) < 1e-300);
  CHECK(se_kernel(1.2, -0.7, unit) == se_kernel(-0.7, 1.2, unit));
  CHECK(se_kernel(1.2, -0.7, p) <= p.variance);
}

TEST_CASE("se_kernel rejects invalid inputs") {
  SEKernelParams p{1.0, 1.0};
  CHECK_THROWS_AS(se_kernel(std::nan(""), 0.0, p), std::invalid_argument);
  CHECK_THROWS_AS(se_kernel(0.0, INFINITY, p), std::invalid_argument);
  CHECK_THROWS_AS(se_kernel(0.0, 0.0, SEKernelParams{-1.0, 1.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(se_kernel(0.0, 0.0, SEKernelParams{1.0, 0.0}),
                  std::invalid_argument);
}

TEST_CASE("se_spectral_density closed-form values and evenness") {
  SEKernelParams unit{1.0, 1.0};
  CHECK(se_spectral_density(0.0, unit) ==
        doctest::Approx(2.5066282746310002).epsilon(1e-12));
  SEKernelParams wide{4.0, 0.5};
  CHECK(se_spectral_density(0.0, wide) ==
        doctest::Approx(5.0132565492620005).epsilon(1e-12));
  for (double omega : {0.1, 0.7, 2.3, 11.0}) {
    CHECK(se_spectral_density(omega, unit) ==
          doctest::Approx(se_spectral_density(-omega, unit)).epsilon(1e-14));
    CHECK(se_spectral_density(omega, unit) <=
          se_spectral_density(0.0, unit));
  }
}

TEST_CASE("hilbert eigenpair values") {
  HilbertBasisConfig cfg{128, 2.55};
  SUBCASE("dirichlet boundary") {
    const auto near_edge = hilbert_eigenpair(1, -2.55 + 1e-12, cfg);
    CHECK(std::abs(near_edge.eigenfunction) < 1e-9);
  }
  SUBCASE("center values") {
    const auto pair = hilbert_eigenpair(1, 0.0, cfg);
    CHECK(pair.eigenfunction ==
          doctest::Approx(0.6262242910851495).epsilon(1e-12));
    CHECK(pair.eigenvalue ==
          doctest::Approx(0.37945422533984462).epsilon(1e-12));
  }
  SUBCASE("eigenvalue identity -phi'' = lambda phi by finite differences") {
    const double c = 0.3;
    const double h = 1e-5;
    for (int m : {1, 4, 9}) {
      const double up = hilbert_eigenpair(m, c + h, cfg).eigenfunction;
      const double mid = hilbert_eigenpair(m, c, cfg).eigenfunction;
      const double down = hilbert_eigenpair(m, c - h, cfg).eigenfunction;
      const double second = (up - 2.0 * mid + down) / (h * h);
      CHECK(-second / mid ==
            doctest::Approx(hilbert_eigenpair(m, c, cfg).eigenvalue)
                .epsilon(1e-4));
    }
  }
  SUBCASE("domain violations") {
    CHECK_THROWS_AS(hilbert_eigenpair(1, 2.55, cfg), std::domain_error);
    CHECK_THROWS_AS(hilbert_eigenpair(1, -3.0, cfg), std::domain_error);
    CHECK_THROWS_AS(hilbert_eigenpair(0, 0.0, cfg), std::invalid_argument);
    CHECK_THROWS_AS(hilbert_eigenpair(129, 0.0, cfg), std::invalid_argument);
  }
}

TEST_CASE("eigenfunctions orthonormal under trapezoid quadrature") {
  HilbertBasisConfig cfg{8, 2.55};
  const int grid = 10000;
  const double j = cfg.domain_half_width;
  const double h = 2.0 * j / grid;
  for (int m = 1; m <= 4; ++m) {
    for (int n = m; n <= 4; ++n) {
      double acc = 0.0;
      for (int i = 0; i <= grid; ++i) {
        const double c = std::min(std::max(-j + i * h, -j + 1e-12), j - 1e-12);
        const double f = hilbert_eigenpair(m, c, cfg).eigenfunction *
                         hilbert_eigenpair(n, c, cfg).eigenfunction;
        acc += (i == 0 || i == grid) ? 0.5 * f : f;
      }
      acc *= h;
      CHECK(acc == doctest::Approx(m == n ? 1.0 : 0.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("hilbert_features approximates the SE kernel") {
  SEKernelParams p{1.0, 0.5};
  HilbertBasisConfig cfg{128, 2.55};
  double max_err = 0.0;
  for (double a = -1.5; a <= 1.5 + 1e-9; a += 0.1) {
    for (double b = -1.5; b <= 1.5 + 1e-9; b += 0.1) {
      const double approx = hilbert_approx_kernel(a, b, p, cfg);
      max_err = std::max(max_err, std::abs(approx - se_kernel(a, b, p)));
    }
  }
  CHECK(max_err < 1e-3);
}

TEST_CASE("approximation error non-increasing as M doubles") {
  SEKernelParams p{1.0, 0.5};
  double previous = 1e9;
  for (int m : {16, 32, 64, 128}) {
    HilbertBasisConfig cfg{m, 2.55};
    double max_err = 0.0;
    for (double a = -1.5; a <= 1.5 + 1e-9; a += 0.1) {
      for (double b = -1.5; b <= 1.5 + 1e-9; b += 0.1) {
        max_err = std::max(
            max_err, std::abs(hilbert_approx_kernel(a, b, p, cfg) -
                              se_kernel(a, b, p)));
      }
    }
    CHECK(max_err <= previous + 1e-12);
    previous = max_err;
  }
}

TEST_CASE("rank-1 basis gives singular two-point gram") {
  SEKernelParams p{1.0, 0.5};
  HilbertBasisConfig cfg{1, 2.55};
  const double k11 = hilbert_approx_kernel(0.2, 0.2, p, cfg);
  const double k12 = hilbert_approx_kernel(0.2, -0.4, p, cfg);
  const double k22 = hilbert_approx_kernel(-0.4, -0.4, p, cfg);
  CHECK(std::abs(k11 * k22 - k12 * k12) < 1e-12);
}

TEST_CASE("prior diagonal positive and decreasing") {
  SEKernelParams p{1.3, 0.4};
  HilbertBasisConfig cfg{64, 2.55};
  const Eigen::VectorXd diag = hilbert_prior_diag(p, cfg);
  for (Eigen::Index i = 0; i < diag.size(); ++i) {
    CHECK(diag(i) > 0.0);
    if (i > 0) CHECK(diag(i) <= diag(i - 1));
  }
  const HilbertFeatures f = hilbert_features(0.77, p, cfg);
  CHECK(f.phi.allFinite());
  CHECK(f.prior_diag.allFinite());
}

TEST_CASE("SE gram matrices are PSD with jitter") {
  Rng rng(123);
  SEKernelParams p{1.0, 0.7};
  for (int trial = 0; trial < 3; ++trial) {
    const int n = 20;
    Eigen::VectorXd pts(n);
    for (int i = 0; i < n; ++i) pts(i) = rng.uniform(-2.0, 2.0);
    Eigen::MatrixXd gram(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) gram(i, j) = se_kernel(pts(i), pts(j), p);
    }
    gram.diagonal().array() += 1e-10;
    CHECK(min_symmetric_eigenvalue(gram) >= -1e-8);
  }
}

TEST_CASE("product space-time kernel gram is PSD") {
  Rng rng(9);
  ProductSpaceTimeKernelParams params;
  params.spatial = {1.2, 0.8};
  params.temporal = {1.0, 0.25};
  const int n = 20;
  const Eigen::MatrixXd z = rng.normal_matrix(n, 3);
  Eigen::VectorXd t(n);
  for (int i = 0; i < n; ++i) t(i) = rng.uniform();
  Eigen::MatrixXd gram = product_space_time_gram(z, t, params);
  CHECK((gram - gram.transpose()).cwiseAbs().maxCoeff() == 0.0);
  gram.diagonal().array() += 1e-10;
  CHECK(min_symmetric_eigenvalue(gram) >= -1e-8);
}

TEST_CASE("clamp_into_domain pulls boundary values inward") {
  HilbertBasisConfig cfg{16, 2.55};
  CHECK(clamp_into_domain(2.55, cfg) == doctest::Approx(2.55 - 1e-9));
  CHECK(clamp_into_domain(-9.0, cfg) == doctest::Approx(-2.55 + 1e-9));
  CHECK(clamp_into_domain(0.3, cfg) == 0.3);
  // The clamped value is inside the open domain.
  CHECK_NOTHROW(hilbert_phi(clamp_into_domain(2.55, cfg), cfg));
}

TEST_CASE("covariate scaler maps onto [-1,1] and clamps") {
  CovariateScaler scaler(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2));
  Eigen::VectorXd raw(2);
  raw << 0.25, 1.5;
  const Eigen::VectorXd scaled = scaler.rescale(raw);
  CHECK(scaled(0) == doctest::Approx(-0.5));
  CHECK(scaled(1) == doctest::Approx(1.0));  // clamped to the upper bound
  CHECK_THROWS_AS(CovariateScaler(Eigen::VectorXd::Ones(2),
                                  Eigen::VectorXd::Ones(2)),
                  std::invalid_argument);
}

TEST_CASE("cholesky_with_jitter escalates and reports") {
  Eigen::MatrixXd good = Eigen::MatrixXd::Identity(3, 3);
  const CholeskyResult r = cholesky_with_jitter(good);
  CHECK(r.attempts == 0);
  // Rank-deficient matrix: needs jitter but succeeds.
  Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(4, 4);
  CHECK_NOTHROW(cholesky_with_jitter(ones));
  // Strongly indefinite matrix: must throw after escalation.
  Eigen::MatrixXd bad = -Eigen::MatrixXd::Identity(3, 3);
  CHECK_THROWS_AS(cholesky_with_jitter(bad), std::runtime_error);
}
