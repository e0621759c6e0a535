#include "driftbo/ad.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace driftbo::ad {

const Eigen::MatrixXd& Var::value() const {
  if (!valid()) throw std::logic_error("Var: access to empty handle");
  return graph_->node(*this).value;
}

double Var::scalar() const {
  const Eigen::MatrixXd& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw std::logic_error("Var::scalar: value is not 1x1");
  }
  return v(0, 0);
}

Var Graph::emit(Eigen::MatrixXd value, bool needs_grad,
                std::function<void()> backprop) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.backprop = needs_grad ? std::move(backprop) : std::function<void()>{};
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Eigen::MatrixXd& Graph::grad_of(int index) {
  Node& n = nodes_[static_cast<size_t>(index)];
  if (n.grad.size() == 0) {
    n.grad = Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

void Graph::check_same_graph(Var v) const {
  if (v.graph_ != this) {
    throw std::logic_error("Graph: variable belongs to a different graph");
  }
}

Var Graph::constant(Eigen::MatrixXd v) { return emit(std::move(v), false, {}); }

Var Graph::constant_scalar(double v) {
  Eigen::MatrixXd m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Var Graph::param(Parameter& p) {
  Var v = emit(p.value, true, {});
  node(v).bound = &p;
  return v;
}

#define DRIFTBO_AD_BINARY_PRELUDE(a, b) \
  check_same_graph(a);                  \
  check_same_graph(b);                  \
  const int ia = a.index_;              \
  const int ib = b.index_;              \
  const bool ng = node(a).needs_grad || node(b).needs_grad;

#define DRIFTBO_AD_UNARY_PRELUDE(a) \
  check_same_graph(a);              \
  const int ia = a.index_;          \
  const bool ng = node(a).needs_grad;

Var Graph::add(Var a, Var b) {
  DRIFTBO_AD_BINARY_PRELUDE(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("Graph::add: shape mismatch");
  }
  Eigen::MatrixXd out = node(a).value + node(b).value;
  Var r = emit(std::move(out), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ib, ir]() {
      const Eigen::MatrixXd& g = grad_of(ir);
      if (nodes_[ia].needs_grad) grad_of(ia) += g;
      if (nodes_[ib].needs_grad) grad_of(ib) += g;
    };
  }
  return r;
}

Var Graph::sub(Var a, Var b) {
  DRIFTBO_AD_BINARY_PRELUDE(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("Graph::sub: shape mismatch");
  }
  Var r = emit(node(a).value - node(b).value, ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ib, ir]() {
      const Eigen::MatrixXd& g = grad_of(ir);
      if (nodes_[ia].needs_grad) grad_of(ia) += g;
      if (nodes_[ib].needs_grad) grad_of(ib) -= g;
    };
  }
  return r;
}

Var Graph::neg(Var a) { return scale(a, -1.0); }

Var Graph::cmul(Var a, Var b) {
  DRIFTBO_AD_BINARY_PRELUDE(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("Graph::cmul: shape mismatch");
  }
  Var r = emit(node(a).value.cwiseProduct(node(b).value), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ib, ir]() {
      const Eigen::MatrixXd& g = grad_of(ir);
      if (nodes_[ia].needs_grad)
        grad_of(ia) += g.cwiseProduct(nodes_[ib].value);
      if (nodes_[ib].needs_grad)
        grad_of(ib) += g.cwiseProduct(nodes_[ia].value);
    };
  }
  return r;
}

Var Graph::cdiv(Var a, Var b) {
  DRIFTBO_AD_BINARY_PRELUDE(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("Graph::cdiv: shape mismatch");
  }
  Var r = emit(node(a).value.cwiseQuotient(node(b).value), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ib, ir]() {
      const Eigen::MatrixXd& g = grad_of(ir);
      const Eigen::MatrixXd& bv = nodes_[ib].value;
      if (nodes_[ia].needs_grad) grad_of(ia) += g.cwiseQuotient(bv);
      if (nodes_[ib].needs_grad) {
        grad_of(ib) -= g.cwiseProduct(nodes_[ir].value).cwiseQuotient(bv);
      }
    };
  }
  return r;
}

Var Graph::matmul(Var a, Var b) {
  DRIFTBO_AD_BINARY_PRELUDE(a, b);
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("Graph::matmul: inner dimension mismatch");
  }
  Var r = emit(node(a).value * node(b).value, ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ib, ir]() {
      const Eigen::MatrixXd& g = grad_of(ir);
      if (nodes_[ia].needs_grad)
        grad_of(ia).noalias() += g * nodes_[ib].value.transpose();
      if (nodes_[ib].needs_grad)
        grad_of(ib).noalias() += nodes_[ia].value.transpose() * g;
    };
  }
  return r;
}

Var Graph::scale(Var a, double s) {
  DRIFTBO_AD_UNARY_PRELUDE(a);
  Var r = emit(node(a).value * s, ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir, s]() { grad_of(ia) += s * grad_of(ir); };
  }
  return r;
}

Var Graph::add_scalar(Var a, double s) {
  DRIFTBO_AD_UNARY_PRELUDE(a);
  Var r = emit(node(a).value.array() + s, ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir]() { grad_of(ia) += grad_of(ir); };
  }
  return r;
}

Var Graph::smul(Var scalar, Var a) {
  DRIFTBO_AD_BINARY_PRELUDE(scalar, a);
  if (scalar.rows() != 1 || scalar.cols() != 1) {
    throw std::invalid_argument("Graph::smul: first operand must be 1x1");
  }
  const double s = node(scalar).value(0, 0);
  Var r = emit(node(a).value * s, ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ib, ir, s]() {
      const Eigen::MatrixXd& g = grad_of(ir);
      if (nodes_[ia].needs_grad) {
        grad_of(ia)(0, 0) += (g.array() * nodes_[ib].value.array()).sum();
      }
      if (nodes_[ib].needs_grad) grad_of(ib) += s * g;
    };
  }
  return r;
}

Var Graph::transpose(Var a) {
  DRIFTBO_AD_UNARY_PRELUDE(a);
  Var r = emit(node(a).value.transpose(), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir]() {
      grad_of(ia) += grad_of(ir).transpose();
    };
  }
  return r;
}

Var Graph::exp(Var a) {
  DRIFTBO_AD_UNARY_PRELUDE(a);
  Var r = emit(node(a).value.array().exp(), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir]() {
      grad_of(ia) += grad_of(ir).cwiseProduct(nodes_[ir].value);
    };
  }
  return r;
}

Var Graph::log(Var a) {
  DRIFTBO_AD_UNARY_PRELUDE(a);
  Var r = emit(node(a).value.array().log(), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir]() {
      grad_of(ia) += grad_of(ir).cwiseQuotient(nodes_[ia].value);
    };
  }
  return r;
}

Var Graph::tanh(Var a) {
  DRIFTBO_AD_UNARY_PRELUDE(a);
  Var r = emit(node(a).value.array().tanh(), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir]() {
      const Eigen::ArrayXXd t = nodes_[ir].value.array();
      grad_of(ia).array() += grad_of(ir).array() * (1.0 - t * t);
    };
  }
  return r;
}

Var Graph::sigmoid(Var a) {
  DRIFTBO_AD_UNARY_PRELUDE(a);
  Eigen::MatrixXd out =
      (1.0 / (1.0 + (-node(a).value.array()).exp())).matrix();
  Var r = emit(std::move(out), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir]() {
      const Eigen::ArrayXXd s = nodes_[ir].value.array();
      grad_of(ia).array() += grad_of(ir).array() * s * (1.0 - s);
    };
  }
  return r;
}

Var Graph::square(Var a) {
  DRIFTBO_AD_UNARY_PRELUDE(a);
  Var r = emit(node(a).value.cwiseProduct(node(a).value), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir]() {
      grad_of(ia) += 2.0 * grad_of(ir).cwiseProduct(nodes_[ia].value);
    };
  }
  return r;
}

Var Graph::sqrt0(Var a) {
  DRIFTBO_AD_UNARY_PRELUDE(a);
  Var r = emit(node(a).value.cwiseMax(0.0).cwiseSqrt(), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir]() {
      const Eigen::ArrayXXd root = nodes_[ir].value.array();
      const Eigen::ArrayXXd safe =
          (root > 0.0).select(0.5 / root, Eigen::ArrayXXd::Zero(root.rows(),
                                                                root.cols()));
      grad_of(ia).array() += grad_of(ir).array() * safe;
    };
  }
  return r;
}

Var Graph::abs(Var a) {
  DRIFTBO_AD_UNARY_PRELUDE(a);
  Var r = emit(node(a).value.cwiseAbs(), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir]() {
      const Eigen::ArrayXXd x = nodes_[ia].value.array();
      const Eigen::ArrayXXd sign =
          (x > 0.0).cast<double>() - (x < 0.0).cast<double>();
      grad_of(ia).array() += grad_of(ir).array() * sign;
    };
  }
  return r;
}

Var Graph::relu(Var a) {
  DRIFTBO_AD_UNARY_PRELUDE(a);
  Var r = emit(node(a).value.cwiseMax(0.0), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir]() {
      const Eigen::ArrayXXd mask =
          (nodes_[ia].value.array() > 0.0).cast<double>();
      grad_of(ia).array() += grad_of(ir).array() * mask;
    };
  }
  return r;
}

Var Graph::sum(Var a) {
  DRIFTBO_AD_UNARY_PRELUDE(a);
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = node(a).value.sum();
  Var r = emit(std::move(out), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir]() {
      grad_of(ia).array() += grad_of(ir)(0, 0);
    };
  }
  return r;
}

Var Graph::mean(Var a) {
  return scale(sum(a), 1.0 / static_cast<double>(node(a).value.size()));
}

Var Graph::row_sums(Var a) {
  DRIFTBO_AD_UNARY_PRELUDE(a);
  Var r = emit(node(a).value.rowwise().sum(), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir]() {
      grad_of(ia).colwise() += Eigen::VectorXd(grad_of(ir).col(0));
    };
  }
  return r;
}

Var Graph::col_sums(Var a) {
  DRIFTBO_AD_UNARY_PRELUDE(a);
  Var r = emit(node(a).value.colwise().sum(), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir]() {
      grad_of(ia).rowwise() += Eigen::RowVectorXd(grad_of(ir).row(0));
    };
  }
  return r;
}

Var Graph::broadcast_row(Var row, Eigen::Index n) {
  DRIFTBO_AD_UNARY_PRELUDE(row);
  if (row.rows() != 1) {
    throw std::invalid_argument("Graph::broadcast_row: expected 1xm input");
  }
  Eigen::MatrixXd out = node(row).value.replicate(n, 1);
  Var r = emit(std::move(out), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir]() {
      grad_of(ia) += grad_of(ir).colwise().sum();
    };
  }
  return r;
}

Var Graph::broadcast_col(Var col, Eigen::Index m) {
  DRIFTBO_AD_UNARY_PRELUDE(col);
  if (col.cols() != 1) {
    throw std::invalid_argument("Graph::broadcast_col: expected nx1 input");
  }
  Eigen::MatrixXd out = node(col).value.replicate(1, m);
  Var r = emit(std::move(out), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir]() {
      grad_of(ia) += grad_of(ir).rowwise().sum();
    };
  }
  return r;
}

Var Graph::hcat(Var a, Var b) {
  DRIFTBO_AD_BINARY_PRELUDE(a, b);
  if (a.rows() != b.rows()) {
    throw std::invalid_argument("Graph::hcat: row mismatch");
  }
  Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = node(a).value;
  out.rightCols(b.cols()) = node(b).value;
  const Eigen::Index ca = a.cols();
  const Eigen::Index cb = b.cols();
  Var r = emit(std::move(out), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ib, ir, ca, cb]() {
      const Eigen::MatrixXd& g = grad_of(ir);
      if (nodes_[ia].needs_grad) grad_of(ia) += g.leftCols(ca);
      if (nodes_[ib].needs_grad) grad_of(ib) += g.rightCols(cb);
    };
  }
  return r;
}

Var Graph::block(Var a, Eigen::Index i, Eigen::Index j, Eigen::Index p,
                 Eigen::Index q) {
  DRIFTBO_AD_UNARY_PRELUDE(a);
  Eigen::MatrixXd out = node(a).value.block(i, j, p, q);
  Var r = emit(std::move(out), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir, i, j, p, q]() {
      grad_of(ia).block(i, j, p, q) += grad_of(ir);
    };
  }
  return r;
}

Var Graph::gather_rows(Var a, std::vector<int> indices) {
  DRIFTBO_AD_UNARY_PRELUDE(a);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(indices.size()), a.cols());
  for (size_t k = 0; k < indices.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = node(a).value.row(indices[k]);
  }
  Var r = emit(std::move(out), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir, idx = std::move(indices)]() {
      Eigen::MatrixXd& ga = grad_of(ia);
      const Eigen::MatrixXd& g = grad_of(ir);
      for (size_t k = 0; k < idx.size(); ++k) {
        ga.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
      }
    };
  }
  return r;
}

Var Graph::gather_elements(Var a, std::vector<std::pair<int, int>> indices) {
  DRIFTBO_AD_UNARY_PRELUDE(a);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(indices.size()), 1);
  for (size_t k = 0; k < indices.size(); ++k) {
    out(static_cast<Eigen::Index>(k), 0) =
        node(a).value(indices[k].first, indices[k].second);
  }
  Var r = emit(std::move(out), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir, idx = std::move(indices)]() {
      Eigen::MatrixXd& ga = grad_of(ia);
      const Eigen::MatrixXd& g = grad_of(ir);
      for (size_t k = 0; k < idx.size(); ++k) {
        ga(idx[k].first, idx[k].second) += g(static_cast<Eigen::Index>(k), 0);
      }
    };
  }
  return r;
}

Var Graph::diag_vector(Var a) {
  DRIFTBO_AD_UNARY_PRELUDE(a);
  if (a.rows() != a.cols()) {
    throw std::invalid_argument("Graph::diag_vector: matrix must be square");
  }
  Eigen::MatrixXd out = node(a).value.diagonal();
  Var r = emit(std::move(out), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir]() {
      grad_of(ia).diagonal() += grad_of(ir).col(0);
    };
  }
  return r;
}

Var Graph::diag_matrix(Var col) {
  DRIFTBO_AD_UNARY_PRELUDE(col);
  if (col.cols() != 1) {
    throw std::invalid_argument("Graph::diag_matrix: expected nx1 input");
  }
  Eigen::MatrixXd out =
      Eigen::MatrixXd(node(col).value.col(0).asDiagonal());
  Var r = emit(std::move(out), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir]() {
      grad_of(ia).col(0) += grad_of(ir).diagonal();
    };
  }
  return r;
}

Var Graph::lower_triangle(Var a, bool strict) {
  DRIFTBO_AD_UNARY_PRELUDE(a);
  Eigen::MatrixXd out =
      strict ? Eigen::MatrixXd(node(a).value.triangularView<
                               Eigen::StrictlyLower>())
             : Eigen::MatrixXd(node(a).value.triangularView<Eigen::Lower>());
  Var r = emit(std::move(out), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir, strict]() {
      if (strict) {
        grad_of(ia) +=
            Eigen::MatrixXd(grad_of(ir).triangularView<Eigen::StrictlyLower>());
      } else {
        grad_of(ia) +=
            Eigen::MatrixXd(grad_of(ir).triangularView<Eigen::Lower>());
      }
    };
  }
  return r;
}

Var Graph::cholesky(Var a) {
  DRIFTBO_AD_UNARY_PRELUDE(a);
  Eigen::LLT<Eigen::MatrixXd> llt(node(a).value);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("Graph::cholesky: factorization failed");
  }
  Eigen::MatrixXd l = llt.matrixL();
  Var r = emit(std::move(l), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir]() {
      // Reverse-mode rule for lower Cholesky, symmetric-input convention.
      const Eigen::MatrixXd& l = nodes_[ir].value;
      const Eigen::MatrixXd& lbar = grad_of(ir);
      Eigen::MatrixXd p = l.transpose() * lbar;
      // Lower triangle with halved diagonal.
      Eigen::MatrixXd phi = p.triangularView<Eigen::Lower>();
      phi.diagonal() *= 0.5;
      // abar = L^{-T} phi L^{-1}
      Eigen::MatrixXd tmp =
          l.transpose().triangularView<Eigen::Upper>().solve(phi);
      Eigen::MatrixXd abar =
          l.transpose()
              .triangularView<Eigen::Upper>()
              .solve(tmp.transpose())
              .transpose();
      grad_of(ia) += 0.5 * (abar + abar.transpose());
    };
  }
  return r;
}

Var Graph::trisolve_lower(Var l, Var b) {
  DRIFTBO_AD_BINARY_PRELUDE(l, b);
  Eigen::MatrixXd x =
      node(l).value.triangularView<Eigen::Lower>().solve(node(b).value);
  Var r = emit(std::move(x), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ib, ir]() {
      const Eigen::MatrixXd& l = nodes_[ia].value;
      const Eigen::MatrixXd& x = nodes_[ir].value;
      Eigen::MatrixXd bbar =
          l.transpose().triangularView<Eigen::Upper>().solve(grad_of(ir));
      if (nodes_[ib].needs_grad) grad_of(ib) += bbar;
      if (nodes_[ia].needs_grad) {
        Eigen::MatrixXd lbar = -(bbar * x.transpose());
        grad_of(ia) += Eigen::MatrixXd(lbar.triangularView<Eigen::Lower>());
      }
    };
  }
  return r;
}

Var Graph::trisolve_lower_t(Var l, Var b) {
  DRIFTBO_AD_BINARY_PRELUDE(l, b);
  Eigen::MatrixXd x = node(l).value.transpose()
                          .triangularView<Eigen::Upper>()
                          .solve(node(b).value);
  Var r = emit(std::move(x), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ib, ir]() {
      const Eigen::MatrixXd& l = nodes_[ia].value;
      const Eigen::MatrixXd& x = nodes_[ir].value;
      Eigen::MatrixXd bbar =
          l.triangularView<Eigen::Lower>().solve(grad_of(ir));
      if (nodes_[ib].needs_grad) grad_of(ib) += bbar;
      if (nodes_[ia].needs_grad) {
        Eigen::MatrixXd lbar = -(x * bbar.transpose());
        grad_of(ia) += Eigen::MatrixXd(lbar.triangularView<Eigen::Lower>());
      }
    };
  }
  return r;
}

Var Graph::softmax_cross_entropy_rows(Var logits, std::vector<int> targets) {
  DRIFTBO_AD_UNARY_PRELUDE(logits);
  const Eigen::MatrixXd& z = node(logits).value;
  if (static_cast<Eigen::Index>(targets.size()) != z.rows()) {
    throw std::invalid_argument(
        "Graph::softmax_cross_entropy_rows: one target per row required");
  }
  Eigen::MatrixXd out(z.rows(), 1);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double zmax = z.row(i).maxCoeff();
    const double lse = zmax + std::log((z.row(i).array() - zmax).exp().sum());
    out(i, 0) = lse - z(i, targets[static_cast<size_t>(i)]);
  }
  Var r = emit(std::move(out), ng, nullptr);
  const int ir = r.index_;
  if (ng) {
    node(r).backprop = [this, ia, ir, tg = std::move(targets)]() {
      const Eigen::MatrixXd& z = nodes_[ia].value;
      const Eigen::MatrixXd& g = grad_of(ir);
      Eigen::MatrixXd& ga = grad_of(ia);
      for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double zmax = z.row(i).maxCoeff();
        Eigen::ArrayXd p = (z.row(i).array() - zmax).exp();
        p /= p.sum();
        ga.row(i).array() += g(i, 0) * p.transpose();
        ga(i, tg[static_cast<size_t>(i)]) -= g(i, 0);
      }
    };
  }
  return r;
}

void Graph::backward(Var root) {
  check_same_graph(root);
  if (backward_done_) {
    throw std::logic_error("Graph::backward: may only be called once");
  }
  backward_done_ = true;
  if (root.rows() != 1 || root.cols() != 1) {
    throw std::invalid_argument("Graph::backward: root must be 1x1");
  }
  if (!node(root).needs_grad) return;
  grad_of(root.index_)(0, 0) = 1.0;
  for (int i = root.index_; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.backprop) n.backprop();
    if (n.bound != nullptr) n.bound->grad += n.grad;
  }
}

Adam::Adam(std::vector<Parameter*> params, double learning_rate, double beta1,
           double beta2, double eps)
    : params_(std::move(params)),
      learning_rate_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Parameter* p : params_) {
    m_.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
    v_[i] =
        beta2_ * v_[i] +
        (1.0 - beta2_) * Eigen::MatrixXd(p.grad.cwiseProduct(p.grad));
    const Eigen::ArrayXXd mhat = m_[i].array() / bc1;
    const Eigen::ArrayXXd vhat = v_[i].array() / bc2;
    p.value.array() -= learning_rate_ * mhat / (vhat.sqrt() + eps_);
    p.zero_grad();
  }
}

std::vector<Eigen::MatrixXd> snapshot_values(
    const std::vector<Parameter*>& params) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back(p->value);
  return out;
}

void restore_values(const std::vector<Parameter*>& params,
                    const std::vector<Eigen::MatrixXd>& snapshot) {
  if (params.size() != snapshot.size()) {
    throw std::invalid_argument("restore_values: size mismatch");
  }
  for (size_t i = 0; i < params.size(); ++i) params[i]->value = snapshot[i];
}

}  // namespace driftbo::ad
