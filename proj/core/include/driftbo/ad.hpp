#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace driftbo::ad {

// A persistent trainable tensor. Graphs reference parameters by pointer and
// accumulate into grad on backward(); the owner is responsible for keeping
// the parameter alive for the lifetime of any graph bound to it.
struct Parameter {
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;
  std::string name;

  Parameter() = default;
  explicit Parameter(Eigen::MatrixXd v, std::string n = {})
      : value(std::move(v)), name(std::move(n)) {
    grad = Eigen::MatrixXd::Zero(value.rows(), value.cols());
  }

  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

class Graph;

// Handle to a node in a Graph. Values are computed eagerly when an operation
// is recorded, so Var::value() is always available during graph construction.
class Var {
 public:
  Var() = default;
  bool valid() const { return graph_ != nullptr; }
  const Eigen::MatrixXd& value() const;
  double scalar() const;  // requires a 1x1 value
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  friend class Graph;
  Var(Graph* graph, int index) : graph_(graph), index_(index) {}
  Graph* graph_ = nullptr;
  int index_ = -1;
};

// Define-by-run reverse-mode tape over Eigen matrices.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves.
  Var constant(Eigen::MatrixXd v);
  Var constant_scalar(double v);
  Var param(Parameter& p);

  // Arithmetic.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var neg(Var a);
  Var cmul(Var a, Var b);  // elementwise product, equal shapes
  Var cdiv(Var a, Var b);  // elementwise quotient, equal shapes
  Var matmul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var smul(Var scalar, Var a);  // (1x1 scalar variable) * matrix
  Var transpose(Var a);

  // Elementwise functions.
  Var exp(Var a);
  Var log(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var square(Var a);
  // sqrt with zero gradient pinned at exact zeros (pairwise distances hit the
  // diagonal with exact zeros, where the true derivative is unbounded).
  Var sqrt0(Var a);
  Var abs(Var a);   // subgradient 0 at 0
  Var relu(Var a);  // subgradient 0 at 0

  // Reductions and shaping.
  Var sum(Var a);             // 1x1
  Var row_sums(Var a);        // n x 1
  Var col_sums(Var a);        // 1 x m
  Var mean(Var a);            // 1x1
  Var broadcast_row(Var row, Eigen::Index n);  // 1xm -> nxm
  Var broadcast_col(Var col, Eigen::Index m);  // nx1 -> nxm
  Var hcat(Var a, Var b);
  Var block(Var a, Eigen::Index i, Eigen::Index j, Eigen::Index p,
            Eigen::Index q);
  Var gather_rows(Var a, std::vector<int> indices);
  Var gather_elements(Var a, std::vector<std::pair<int, int>> indices);  // kx1
  Var diag_vector(Var a);            // square matrix -> nx1 diagonal
  Var diag_matrix(Var col);          // nx1 -> n x n diagonal matrix
  Var lower_triangle(Var a, bool strict);

  // Linear algebra.
  Var cholesky(Var a);                 // lower factor of an SPD matrix
  Var trisolve_lower(Var l, Var b);    // L^{-1} B
  Var trisolve_lower_t(Var l, Var b);  // L^{-T} B

  // Per-row categorical cross entropy: out(i) = -log softmax(logits.row(i))
  // at targets[i].
  Var softmax_cross_entropy_rows(Var logits, std::vector<int> targets);

  // Runs reverse accumulation from a 1x1 root. May be called once per graph.
  void backward(Var root);

  int node_count() const { return static_cast<int>(nodes_.size()); }

 private:
  friend class Var;

  struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    std::function<void()> backprop;  // empty for leaves/constants
    bool needs_grad = false;
    Parameter* bound = nullptr;
  };

  Var emit(Eigen::MatrixXd value, bool needs_grad,
           std::function<void()> backprop);
  Node& node(Var v) { return nodes_[static_cast<size_t>(v.index_)]; }
  const Node& node(Var v) const {
    return nodes_[static_cast<size_t>(v.index_)];
  }
  Eigen::MatrixXd& grad_of(int index);
  void check_same_graph(Var v) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Adam optimizer over a fixed set of parameters.
class Adam {
 public:
  explicit Adam(std::vector<Parameter*> params, double learning_rate = 1e-3,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // Applies one update from the gradients currently stored in the parameters,
  // then zeroes them.
  void step();
  void set_learning_rate(double lr) { learning_rate_ = lr; }
  double learning_rate() const { return learning_rate_; }
  const std::vector<Parameter*>& params() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Eigen::MatrixXd> m_;
  std::vector<Eigen::MatrixXd> v_;
  double learning_rate_;
  double beta1_;
  double beta2_;
  double eps_;
  long step_count_ = 0;
};

// Snapshot/restore helpers used for rollback on divergence.
std::vector<Eigen::MatrixXd> snapshot_values(
    const std::vector<Parameter*>& params);
void restore_values(const std::vector<Parameter*>& params,
                    const std::vector<Eigen::MatrixXd>& snapshot);

}  // namespace driftbo::ad
