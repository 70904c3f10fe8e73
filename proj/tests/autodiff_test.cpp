#include <gtest/gtest.h>

#include <functional>

#include "sivae/autodiff.hpp"

namespace sivae::ad {
namespace {

// Central differences of a scalar function of one parameter.
Matrix numeric_grad(Parameter& p, const std::function<double()>& f, double h = 1e-6) {
  Matrix out(p.value.rows(), p.value.cols());
  for (Eigen::Index i = 0; i < p.value.size(); ++i) {
    const double old = p.value(i);
    p.value(i) = old + h;
    const double up = f();
    p.value(i) = old - h;
    const double down = f();
    p.value(i) = old;
    out(i) = (up - down) / (2 * h);
  }
  return out;
}

void expect_grad(const std::function<Expr(Graph&, Parameter&)>& build, Matrix init) {
  Parameter p{"p", std::move(init), {}};
  auto value = [&] {
    Graph g(false);
    return build(g, p).value()(0, 0);
  };
  p.zero_grad();
  Graph g;
  g.backward(build(g, p));
  const Matrix numeric = numeric_grad(p, value);
  EXPECT_LT((p.grad - numeric).cwiseAbs().maxCoeff(), 1e-6) << "analytic\n" << p.grad << "\nnumeric\n" << numeric;
}

Matrix sample(Eigen::Index r, Eigen::Index c, unsigned seed) {
  std::srand(seed);
  return Matrix::Random(r, c);
}

TEST(Autodiff, ElementwiseOps) {
  expect_grad([](Graph& g, Parameter& p) { return sum_all(tanh(g.param(p))); }, sample(3, 4, 1));
  expect_grad([](Graph& g, Parameter& p) { return sum_all(sigmoid(g.param(p))); }, sample(3, 4, 2));
  expect_grad([](Graph& g, Parameter& p) { return sum_all(exp(g.param(p))); }, sample(3, 4, 3));
  expect_grad([](Graph& g, Parameter& p) { return sum_all(square(g.param(p))); }, sample(3, 4, 4));
  expect_grad([](Graph& g, Parameter& p) {
    const Expr x = g.param(p);
    return sum_all(mul(x, add_scalar(scale(x, 3.0), 0.5)));
  }, sample(2, 5, 5));
}

TEST(Autodiff, BroadcastAddAndAffine) {
  const Matrix a = sample(4, 3, 6);
  const Matrix w = sample(3, 5, 7);
  expect_grad([&](Graph& g, Parameter& p) { return sum_all(square(add(g.constant(a), g.param(p)))); }, sample(1, 3, 8));
  expect_grad([&](Graph& g, Parameter& p) { return sum_all(square(affine(g.constant(a), g.param(p), g.constant(Matrix::Ones(1, 5))))); }, w);
  expect_grad([&](Graph& g, Parameter& p) { return sum_all(square(affine(g.param(p), g.constant(w), g.constant(Matrix::Zero(1, 5))))); }, a);
  expect_grad([&](Graph& g, Parameter& p) { return sum_all(tanh(matmul(g.param(p), g.constant(w)))); }, a);
}

TEST(Autodiff, StructuralOps) {
  expect_grad([](Graph& g, Parameter& p) {
    const Expr x = g.param(p);
    const Expr parts[] = {slice_cols(x, 1, 2), square(slice_cols(x, 0, 1))};
    return sum_all(tanh(concat_cols(parts)));
  }, sample(3, 4, 9));
  expect_grad([](Graph& g, Parameter& p) { return sum_all(square(slice_rows(g.param(p), 1, 2))); }, sample(4, 2, 10));
  expect_grad([](Graph& g, Parameter& p) {
    const std::vector<int> ids{2, 0, 2};
    return sum_all(square(lookup(g.param(p), ids)));
  }, sample(4, 3, 11));
  expect_grad([](Graph& g, Parameter& p) {
    const Expr x = g.param(p);
    const std::vector<double> mask{1, 0, 1};
    return sum_all(square(select_rows(x, scale(x, 2.0), mask)));
  }, sample(3, 2, 12));
  expect_grad([](Graph& g, Parameter& p) {
    const std::vector<double> f{0.5, -2, 1};
    return sum_all(square(sum_cols(scale_rows(g.param(p), f))));
  }, sample(3, 2, 13));
}

TEST(Autodiff, LogSoftmaxPick) {
  const std::vector<int> targets{1, 3, 0};
  const std::vector<double> mask{1, 1, 0};
  expect_grad([&](Graph& g, Parameter& p) { return sum_all(log_softmax_pick(g.param(p), targets, mask)); }, sample(3, 4, 14));
  Graph g(false);
  const Expr picked = log_softmax_pick(g.constant(Matrix::Zero(3, 4)), targets, mask);
  EXPECT_NEAR(picked.value()(0, 0), -std::log(4.0), 1e-12);
  EXPECT_EQ(picked.value()(2, 0), 0.0);
}

TEST(Autodiff, SoftmaxRowsSumToOne) {
  const Matrix p = softmax_rows(sample(5, 7, 15) * 30.0);
  for (Eigen::Index r = 0; r < p.rows(); ++r) EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-12);
}

TEST(Autodiff, ParameterGradientsAccumulateAcrossUses) {
  Parameter p{"p", Matrix::Constant(1, 1, 2.0), {}};
  p.zero_grad();
  Graph g;
  const Expr a = g.param(p);
  const Expr b = g.param(p);
  g.backward(sum_all(mul(a, b)));
  EXPECT_DOUBLE_EQ(p.grad(0, 0), 4.0);
}

TEST(Autodiff, ConstantsReceiveNoGradient) {
  Graph g;
  const Expr c = g.constant(Matrix::Ones(2, 2));
  EXPECT_FALSE(g.needs_grad(c.id()));
  g.backward(sum_all(square(c)));
}

}  // namespace
}  // namespace sivae::ad
