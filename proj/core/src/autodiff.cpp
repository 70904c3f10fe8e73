#include "sivae/autodiff.hpp"

#include <cmath>

#include "sivae/error.hpp"

namespace sivae::ad {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::DimensionMismatch, what);
}

bool any_grad(Graph& g, std::initializer_list<Expr> inputs) {
  if (!g.recording()) return false;
  for (const Expr& e : inputs) {
    if (g.needs_grad(e.id())) return true;
  }
  return false;
}

}  // namespace

Matrix& Graph::grad_of(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
  return n.grad;
}

Expr Graph::push(Matrix value, bool needs_grad, Backward back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad && record_;
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Expr(this, static_cast<int>(nodes_.size()) - 1);
}

Expr Graph::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Expr Graph::param(Parameter& p) {
  Expr e = push(p.value, record_, nullptr);
  if (record_) nodes_.back().param = &p;
  return e;
}

void Graph::backward(Expr root) {
  require(root.rows() == 1 && root.cols() == 1, "backward needs a scalar root");
  if (!record_) return;
  for (auto& n : nodes_) n.grad.resize(0, 0);
  grad_of(root.id()).setOnes();
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.back) n.back(*this, i);
    if (n.param) {
      if (n.param->grad.rows() != n.value.rows() || n.param->grad.cols() != n.value.cols()) {
        n.param->zero_grad();
      }
      n.param->grad += n.grad;
    }
  }
}

Expr add(Expr a, Expr b) {
  Graph& g = a.graph();
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const bool broadcast = bv.rows() == 1 && av.rows() != 1;
  require(av.cols() == bv.cols() && (broadcast || av.rows() == bv.rows()), "add: shape mismatch");
  Matrix out = broadcast ? Matrix(av.rowwise() + bv.row(0)) : Matrix(av + bv);
  const int ia = a.id(), ib = b.id();
  return g.push(std::move(out), any_grad(g, {a, b}), [ia, ib, broadcast](Graph& gr, int self) {
    const Matrix gs = gr.grad_of(self);
    if (gr.needs_grad(ia)) gr.grad_of(ia) += gs;
    if (gr.needs_grad(ib)) {
      if (broadcast) {
        gr.grad_of(ib) += gs.colwise().sum();
      } else {
        gr.grad_of(ib) += gs;
      }
    }
  });
}

Expr sub(Expr a, Expr b) { return add(a, scale(b, -1.0)); }

Expr mul(Expr a, Expr b) {
  Graph& g = a.graph();
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  Matrix out = a.value().cwiseProduct(b.value());
  const int ia = a.id(), ib = b.id();
  return g.push(std::move(out), any_grad(g, {a, b}), [ia, ib](Graph& gr, int self) {
    const Matrix gs = gr.grad_of(self);
    if (gr.needs_grad(ia)) gr.grad_of(ia) += gs.cwiseProduct(gr.value_of(ib));
    if (gr.needs_grad(ib)) gr.grad_of(ib) += gs.cwiseProduct(gr.value_of(ia));
  });
}

Expr scale(Expr a, double s) {
  Graph& g = a.graph();
  const int ia = a.id();
  return g.push(a.value() * s, any_grad(g, {a}), [ia, s](Graph& gr, int self) {
    gr.grad_of(ia) += gr.grad_of(self) * s;
  });
}

Expr add_scalar(Expr a, double s) {
  Graph& g = a.graph();
  const int ia = a.id();
  Matrix out = a.value().array() + s;
  return g.push(std::move(out), any_grad(g, {a}), [ia](Graph& gr, int self) {
    gr.grad_of(ia) += gr.grad_of(self);
  });
}

Expr matmul(Expr a, Expr b) {
  Graph& g = a.graph();
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Matrix out = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return g.push(std::move(out), any_grad(g, {a, b}), [ia, ib](Graph& gr, int self) {
    const Matrix& gs = gr.grad_of(self);
    if (gr.needs_grad(ia)) gr.grad_of(ia).noalias() += gs * gr.value_of(ib).transpose();
    if (gr.needs_grad(ib)) gr.grad_of(ib).noalias() += gr.value_of(ia).transpose() * gs;
  });
}

Expr affine(Expr a, Expr weight, Expr bias) {
  Graph& g = a.graph();
  require(a.cols() == weight.rows(), "affine: inner dimension mismatch");
  require(bias.rows() == 1 && bias.cols() == weight.cols(), "affine: bias shape");
  Matrix out = a.value() * weight.value();
  out.rowwise() += bias.value().row(0);
  const int ia = a.id(), iw = weight.id(), ib = bias.id();
  return g.push(std::move(out), any_grad(g, {a, weight, bias}), [ia, iw, ib](Graph& gr, int self) {
    const Matrix& gs = gr.grad_of(self);
    if (gr.needs_grad(ia)) gr.grad_of(ia).noalias() += gs * gr.value_of(iw).transpose();
    if (gr.needs_grad(iw)) gr.grad_of(iw).noalias() += gr.value_of(ia).transpose() * gs;
    if (gr.needs_grad(ib)) gr.grad_of(ib) += gs.colwise().sum();
  });
}

Expr sigmoid(Expr a) {
  Graph& g = a.graph();
  Matrix out = a.value().unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  const int ia = a.id();
  return g.push(std::move(out), any_grad(g, {a}), [ia](Graph& gr, int self) {
    const Matrix& y = gr.value_of(self);
    gr.grad_of(ia).array() += gr.grad_of(self).array() * y.array() * (1.0 - y.array());
  });
}

Expr tanh(Expr a) {
  Graph& g = a.graph();
  Matrix out = a.value().array().tanh();
  const int ia = a.id();
  return g.push(std::move(out), any_grad(g, {a}), [ia](Graph& gr, int self) {
    const Matrix& y = gr.value_of(self);
    gr.grad_of(ia).array() += gr.grad_of(self).array() * (1.0 - y.array().square());
  });
}

Expr exp(Expr a) {
  Graph& g = a.graph();
  Matrix out = a.value().array().exp();
  const int ia = a.id();
  return g.push(std::move(out), any_grad(g, {a}), [ia](Graph& gr, int self) {
    gr.grad_of(ia).array() += gr.grad_of(self).array() * gr.value_of(self).array();
  });
}

Expr square(Expr a) {
  Graph& g = a.graph();
  Matrix out = a.value().array().square();
  const int ia = a.id();
  return g.push(std::move(out), any_grad(g, {a}), [ia](Graph& gr, int self) {
    gr.grad_of(ia).array() += 2.0 * gr.grad_of(self).array() * gr.value_of(ia).array();
  });
}

Expr concat_cols(std::span<const Expr> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  Graph& g = parts.front().graph();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool grad = false;
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  for (const Expr& p : parts) {
    require(p.rows() == rows, "concat_cols: row mismatch");
    cols += p.cols();
    grad = grad || (g.recording() && g.needs_grad(p.id()));
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Matrix out(rows, cols);
  Eigen::Index offset = 0;
  for (const Expr& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return g.push(std::move(out), grad, [ids, widths](Graph& gr, int self) {
    const Matrix gs = gr.grad_of(self);
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (gr.needs_grad(ids[k])) gr.grad_of(ids[k]) += gs.middleCols(off, widths[k]);
      off += widths[k];
    }
  });
}

Expr slice_cols(Expr a, Eigen::Index start, Eigen::Index count) {
  Graph& g = a.graph();
  require(start >= 0 && start + count <= a.cols(), "slice_cols: out of range");
  Matrix out = a.value().middleCols(start, count);
  const int ia = a.id();
  return g.push(std::move(out), any_grad(g, {a}), [ia, start, count](Graph& gr, int self) {
    gr.grad_of(ia).middleCols(start, count) += gr.grad_of(self);
  });
}

Expr slice_rows(Expr a, Eigen::Index start, Eigen::Index count) {
  Graph& g = a.graph();
  require(start >= 0 && start + count <= a.rows(), "slice_rows: out of range");
  Matrix out = a.value().middleRows(start, count);
  const int ia = a.id();
  return g.push(std::move(out), any_grad(g, {a}), [ia, start, count](Graph& gr, int self) {
    gr.grad_of(ia).middleRows(start, count) += gr.grad_of(self);
  });
}

Expr lookup(Expr table, std::span<const int> ids) {
  Graph& g = table.graph();
  const Matrix& t = table.value();
  Matrix out(static_cast<Eigen::Index>(ids.size()), t.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    require(ids[r] >= 0 && ids[r] < t.rows(), "lookup: id out of range");
    out.row(static_cast<Eigen::Index>(r)) = t.row(ids[r]);
  }
  const int it = table.id();
  std::vector<int> copy(ids.begin(), ids.end());
  return g.push(std::move(out), any_grad(g, {table}), [it, copy](Graph& gr, int self) {
    const Matrix& gs = gr.grad_of(self);
    Matrix& gt = gr.grad_of(it);
    for (std::size_t r = 0; r < copy.size(); ++r) gt.row(copy[r]) += gs.row(static_cast<Eigen::Index>(r));
  });
}

Expr select_rows(Expr a, Expr b, std::span<const double> mask) {
  Graph& g = a.graph();
  require(a.rows() == b.rows() && a.cols() == b.cols(), "select_rows: shape mismatch");
  require(static_cast<Eigen::Index>(mask.size()) == a.rows(), "select_rows: mask length");
  Matrix out = b.value();
  std::vector<bool> take(mask.size());
  for (std::size_t r = 0; r < mask.size(); ++r) {
    take[r] = mask[r] != 0.0;
    if (take[r]) out.row(static_cast<Eigen::Index>(r)) = a.value().row(static_cast<Eigen::Index>(r));
  }
  const int ia = a.id(), ib = b.id();
  return g.push(std::move(out), any_grad(g, {a, b}), [ia, ib, take](Graph& gr, int self) {
    const Matrix gs = gr.grad_of(self);
    for (std::size_t r = 0; r < take.size(); ++r) {
      const int target = take[r] ? ia : ib;
      if (gr.needs_grad(target)) gr.grad_of(target).row(static_cast<Eigen::Index>(r)) += gs.row(static_cast<Eigen::Index>(r));
    }
  });
}

Expr scale_rows(Expr a, std::span<const double> factors) {
  Graph& g = a.graph();
  require(static_cast<Eigen::Index>(factors.size()) == a.rows(), "scale_rows: factor length");
  const Vector f = Eigen::Map<const Vector>(factors.data(), static_cast<Eigen::Index>(factors.size()));
  Matrix out = f.asDiagonal() * a.value();
  const int ia = a.id();
  return g.push(std::move(out), any_grad(g, {a}), [ia, f](Graph& gr, int self) {
    gr.grad_of(ia) += f.asDiagonal() * gr.grad_of(self);
  });
}

Expr sum_cols(Expr a) {
  Graph& g = a.graph();
  Matrix out = a.value().rowwise().sum();
  const int ia = a.id();
  return g.push(std::move(out), any_grad(g, {a}), [ia](Graph& gr, int self) {
    const Matrix gs = gr.grad_of(self);
    Matrix& ga = gr.grad_of(ia);
    ga.colwise() += gs.col(0);
  });
}

Expr sum_all(Expr a) {
  Graph& g = a.graph();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const int ia = a.id();
  return g.push(std::move(out), any_grad(g, {a}), [ia](Graph& gr, int self) {
    gr.grad_of(ia).array() += gr.grad_of(self)(0, 0);
  });
}

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

Matrix softmax_rows(const Matrix& logits) { return log_softmax_rows(logits).array().exp(); }

Expr log_softmax_pick(Expr logits, std::span<const int> targets, std::span<const double> mask) {
  Graph& g = logits.graph();
  const Matrix& lv = logits.value();
  require(static_cast<Eigen::Index>(targets.size()) == lv.rows(), "log_softmax_pick: target count");
  require(mask.size() == targets.size(), "log_softmax_pick: mask length");
  const Matrix logp = log_softmax_rows(lv);
  Matrix out = Matrix::Zero(lv.rows(), 1);
  for (Eigen::Index r = 0; r < lv.rows(); ++r) {
    const double m = mask[static_cast<std::size_t>(r)];
    if (m == 0.0) continue;
    const int t = targets[static_cast<std::size_t>(r)];
    require(t >= 0 && t < lv.cols(), "log_softmax_pick: target out of range");
    out(r, 0) = m * logp(r, t);
  }
  const int il = logits.id();
  std::vector<int> tg(targets.begin(), targets.end());
  std::vector<double> mk(mask.begin(), mask.end());
  return g.push(std::move(out), any_grad(g, {logits}), [il, tg, mk, logp](Graph& gr, int self) {
    const Matrix& gs = gr.grad_of(self);
    Matrix& gl = gr.grad_of(il);
    for (Eigen::Index r = 0; r < logp.rows(); ++r) {
      const double w = mk[static_cast<std::size_t>(r)] * gs(r, 0);
      if (w == 0.0) continue;
      // d log p_t / d logits = onehot(t) - softmax
      gl.row(r) -= w * logp.row(r).array().exp().matrix();
      gl(r, tg[static_cast<std::size_t>(r)]) += w;
    }
  });
}

}  // namespace sivae::ad
