#pragma once

// A small reverse-mode automatic differentiation tape over dense Eigen
// matrices. Rows index batch members; columns index features.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sivae::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Graph;

class Expr {
 public:
  Expr() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Graph& graph() const { return *graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Expr(Graph* g, int id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  // With record_gradients = false parameters enter as constants and no
  // backward closures are kept.
  explicit Graph(bool record_gradients = true) : record_(record_gradients) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Expr constant(Matrix value);
  Expr param(Parameter& p);

  // Propagates d(root)/d(node) for a 1x1 root and accumulates into every
  // bound Parameter::grad.
  void backward(Expr root);

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  // Internal plumbing for op implementations.
  using Backward = std::function<void(Graph&, int self)>;
  Expr push(Matrix value, bool needs_grad, Backward back);
  const Matrix& value_of(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  Matrix& grad_of(int id);
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Backward back;
    Parameter* param = nullptr;
  };

  bool record_;
  std::vector<Node> nodes_;
};

inline const Matrix& Expr::value() const { return graph_->value_of(id_); }

// Arithmetic. add() broadcasts a 1xN right operand over rows.
Expr add(Expr a, Expr b);
Expr sub(Expr a, Expr b);
Expr mul(Expr a, Expr b);
Expr scale(Expr a, double s);
Expr add_scalar(Expr a, double s);
Expr matmul(Expr a, Expr b);
// a * W + b with b broadcast over rows.
Expr affine(Expr a, Expr weight, Expr bias);

// Elementwise maps.
Expr sigmoid(Expr a);
Expr tanh(Expr a);
Expr exp(Expr a);
Expr square(Expr a);

// Structure.
Expr concat_cols(std::span<const Expr> parts);
Expr slice_cols(Expr a, Eigen::Index start, Eigen::Index count);
Expr slice_rows(Expr a, Eigen::Index start, Eigen::Index count);
// Gathers table rows for each id.
Expr lookup(Expr table, std::span<const int> ids);
// Row-wise select: mask[r] ? a.row(r) : b.row(r).
Expr select_rows(Expr a, Expr b, std::span<const double> mask);
// Multiplies row r by factors[r].
Expr scale_rows(Expr a, std::span<const double> factors);

// Reductions.
Expr sum_cols(Expr a);  // rows x 1
Expr sum_all(Expr a);   // 1 x 1

// Row-wise log softmax likelihood of targets, weighted by mask (0 drops the
// row). Returns rows x 1 of log p(target).
Expr log_softmax_pick(Expr logits, std::span<const int> targets, std::span<const double> mask);

// Value-only helpers.
Matrix log_softmax_rows(const Matrix& logits);
Matrix softmax_rows(const Matrix& logits);

}  // namespace sivae::ad
