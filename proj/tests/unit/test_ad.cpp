#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "driftbo/ad.hpp"
#include "driftbo/rng.hpp"

using driftbo::Rng;
using driftbo::ad::Graph;
using driftbo::ad::Parameter;
using driftbo::ad::Var;

namespace {

// Central finite differences against the analytic gradient.
double max_relative_gradient_error(
    std::vector<Parameter*> params,
    const std::function<double(bool)>& loss_with_optional_backward,
    double eps = 1e-5) {
  for (Parameter* p : params) p->zero_grad();
  (void)loss_with_optional_backward(true);
  double worst = 0.0;
  for (Parameter* p : params) {
    for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
      for (Eigen::Index j = 0; j < p->value.cols(); ++j) {
        const double saved = p->value(i, j);
        p->value(i, j) = saved + eps;
        const double up = loss_with_optional_backward(false);
        p->value(i, j) = saved - eps;
        const double down = loss_with_optional_backward(false);
        p->value(i, j) = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double analytic = p->grad(i, j);
        const double scale =
            std::max({std::abs(numeric), std::abs(analytic), 1e-8});
        worst = std::max(worst, std::abs(numeric - analytic) / scale);
      }
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("dense chain with tanh/sigmoid/matmul/bias matches finite differences") {
  Rng rng(1);
  Parameter w1(rng.normal_matrix(4, 3), "w1");
  Parameter b1(rng.normal_matrix(1, 4), "b1");
  Parameter w2(rng.normal_matrix(2, 4), "w2");
  const Eigen::MatrixXd x = rng.normal_matrix(5, 3);

  auto loss = [&](bool backward) {
    Graph g;
    Var h = g.tanh(g.add(g.matmul(g.constant(x), g.transpose(g.param(w1))),
                         g.broadcast_row(g.param(b1), 5)));
    Var o = g.sigmoid(g.matmul(h, g.transpose(g.param(w2))));
    Var l = g.sum(g.square(o));
    if (backward) g.backward(l);
    return l.scalar();
  };
  CHECK(max_relative_gradient_error({&w1, &b1, &w2}, loss) < 1e-6);
}

TEST_CASE("softmax cross entropy gradient matches finite differences") {
  Rng rng(2);
  Parameter logits(rng.normal_matrix(6, 5), "logits");
  const std::vector<int> targets = {0, 3, 4, 1, 2, 2};
  auto loss = [&](bool backward) {
    Graph g;
    Var nll = g.softmax_cross_entropy_rows(g.param(logits), targets);
    Var l = g.sum(nll);
    if (backward) g.backward(l);
    return l.scalar();
  };
  CHECK(max_relative_gradient_error({&logits}, loss) < 1e-6);
}

TEST_CASE("cholesky and triangular solves match finite differences") {
  Rng rng(3);
  Parameter root(rng.normal_matrix(4, 4), "root");
  Parameter rhs(rng.normal_matrix(4, 2), "rhs");
  auto loss = [&](bool backward) {
    Graph g;
    Var a = g.param(root);
    // SPD matrix built entry-wise from the parameter.
    Var spd = g.add(g.matmul(a, g.transpose(a)),
                    g.constant(4.0 * Eigen::MatrixXd::Identity(4, 4)));
    Var l_chol = g.cholesky(spd);
    Var x = g.trisolve_lower(l_chol, g.param(rhs));
    Var y = g.trisolve_lower_t(l_chol, x);
    Var logdet = g.sum(g.log(g.diag_vector(l_chol)));
    Var l = g.add(g.sum(g.square(y)), logdet);
    if (backward) g.backward(l);
    return l.scalar();
  };
  CHECK(max_relative_gradient_error({&root, &rhs}, loss) < 1e-6);
}

TEST_CASE("gather, broadcast, block and hcat gradients match finite differences") {
  Rng rng(4);
  Parameter table(rng.normal_matrix(5, 3), "table");
  Parameter col(rng.normal_matrix(4, 1), "col");
  auto loss = [&](bool backward) {
    Graph g;
    Var rows = g.gather_rows(g.param(table), {1, 1, 4, 0});
    Var joined = g.hcat(rows, g.broadcast_col(g.param(col), 2));
    Var piece = g.block(joined, 0, 1, 4, 3);
    Var elems = g.gather_elements(g.param(table), {{0, 0}, {2, 2}, {0, 0}});
    Var l = g.add(g.sum(g.square(piece)), g.sum(g.exp(elems)));
    if (backward) g.backward(l);
    return l.scalar();
  };
  CHECK(max_relative_gradient_error({&table, &col}, loss) < 1e-6);
}

TEST_CASE("cdiv, smul, abs, relu, sqrt0, log gradients match finite differences") {
  Rng rng(5);
  Parameter a(Eigen::MatrixXd(rng.normal_matrix(3, 3).array() + 3.0), "a");
  Parameter b(Eigen::MatrixXd(rng.normal_matrix(3, 3).array() + 5.0), "b");
  Parameter s(Eigen::MatrixXd::Constant(1, 1, 0.7), "s");
  auto loss = [&](bool backward) {
    Graph g;
    Var q = g.cdiv(g.param(a), g.param(b));
    Var scaled = g.smul(g.param(s), q);
    Var mix = g.add(g.abs(g.add_scalar(scaled, -0.4)),
                    g.relu(g.add_scalar(scaled, -0.2)));
    Var l = g.sum(g.add(g.sqrt0(mix), g.log(g.param(b))));
    if (backward) g.backward(l);
    return l.scalar();
  };
  CHECK(max_relative_gradient_error({&a, &b, &s}, loss) < 1e-5);
}

TEST_CASE("diag and lower triangle gradients match finite differences") {
  Rng rng(6);
  Parameter m(rng.normal_matrix(4, 4), "m");
  auto loss = [&](bool backward) {
    Graph g;
    Var raw = g.param(m);
    Var c = g.add(g.lower_triangle(raw, true),
                  g.diag_matrix(g.exp(g.diag_vector(raw))));
    Var l = g.add(g.sum(g.square(c)), g.sum(g.diag_vector(raw)));
    if (backward) g.backward(l);
    return l.scalar();
  };
  CHECK(max_relative_gradient_error({&m}, loss) < 1e-6);
}

TEST_CASE("sqrt0 pins the gradient at exact zeros") {
  Parameter z(Eigen::MatrixXd::Zero(2, 2), "z");
  Graph g;
  Var l = g.sum(g.sqrt0(g.param(z)));
  g.backward(l);
  CHECK(z.grad.isZero(0.0));
}

TEST_CASE("row and column sums route gradients") {
  Rng rng(7);
  Parameter m(rng.normal_matrix(3, 4), "m");
  auto loss = [&](bool backward) {
    Graph g;
    Var l = g.add(g.sum(g.square(g.row_sums(g.param(m)))),
                  g.sum(g.square(g.col_sums(g.param(m)))));
    if (backward) g.backward(l);
    return l.scalar();
  };
  CHECK(max_relative_gradient_error({&m}, loss) < 1e-6);
}

TEST_CASE("parameters bound twice accumulate both contributions") {
  Parameter p(Eigen::MatrixXd::Constant(1, 1, 2.0), "p");
  Graph g;
  Var a = g.param(p);
  Var b = g.param(p);
  Var l = g.sum(g.cmul(a, b));  // p^2: expect gradient 2p = 4
  g.backward(l);
  CHECK(p.grad(0, 0) == doctest::Approx(4.0));
}

TEST_CASE("adam descends a quadratic") {
  Parameter p(Eigen::MatrixXd::Constant(2, 2, 5.0), "p");
  driftbo::ad::Adam adam({&p}, 0.1);
  for (int i = 0; i < 400; ++i) {
    Graph g;
    Var l = g.sum(g.square(g.param(p)));
    g.backward(l);
    adam.step();
  }
  CHECK(p.value.cwiseAbs().maxCoeff() < 0.05);
}
