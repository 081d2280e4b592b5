//
// Copyright 2026 The ConFiT Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include "confit/autograd.h"

#include <gtest/gtest.h>

#include <cmath>

#include "confit/random.h"
#include "confit/trainer.h"

namespace confit {
namespace {

using ag::Graph;
using ag::Matrix;
using ag::Parameter;
using ag::Var;

Parameter RandomParam(const std::string& name, int rows, int cols, uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Parameter p{name, Matrix(rows, cols), Matrix::Zero(rows, cols)};
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = normal(rng);
  return p;
}

// Reduces any matrix to a scalar with fixed random weights so every output
// entry contributes a distinct gradient.
Var Probe(const Var& x, uint64_t seed = 99) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix w(x->val().rows(), x->val().cols());
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
  return ag::Dot(x, ag::Constant(w));
}

double CheckOp(std::vector<Parameter> params, const std::function<Var(Graph&, std::vector<Parameter>&)>& f) {
  auto* ps = &params;
  const auto r = GradientCheck(params, [&](Graph& g) { return f(g, *ps); }, 1e-4, 200, 1);
  EXPECT_GT(r.checked, 0u);
  return r.max_relative_error;
}

TEST(Autograd, ForwardValues) {
  Parameter a{"a", Matrix{{1, 2}, {3, 4}}, Matrix::Zero(2, 2)};
  Parameter b{"b", Matrix{{1, 0}, {0, 2}}, Matrix::Zero(2, 2)};
  Graph g;
  const Var va = g.Param(a);
  const Var vb = g.Param(b);
  const Var m = ag::MatMul(va, vb);
  EXPECT_EQ(m->val(), (Matrix{{1, 4}, {3, 8}}));
  EXPECT_DOUBLE_EQ(ag::Scalar(ag::Dot(g.Param(a), g.Param(a))), 30.0);
  EXPECT_EQ(g.parameters().size(), 2u);
  EXPECT_EQ(g.parameters()[0], &a);
}

TEST(Autograd, BackwardAccumulatesIntoParameters) {
  Parameter a{"a", Matrix{{3}}, Matrix::Zero(1, 1)};
  Graph g;
  const Var x = g.Param(a);
  ag::Backward(ag::Dot(x, x));
  EXPECT_DOUBLE_EQ(a.grad(0, 0), 6.0);
  Graph g2;
  const Var y = g2.Param(a);
  ag::Backward(ag::Dot(y, y), 0.5);
  EXPECT_DOUBLE_EQ(a.grad(0, 0), 9.0);
}

TEST(Autograd, FrozenGraphLeavesGradientsAlone) {
  Parameter a{"a", Matrix{{3}}, Matrix::Zero(1, 1)};
  Graph g(false);
  const Var x = g.Param(a);
  ag::Backward(ag::Dot(x, x));
  EXPECT_DOUBLE_EQ(a.grad(0, 0), 0.0);
}

TEST(Autograd, ElementwiseAndLinearOps) {
  std::vector<Parameter> p = {RandomParam("x", 3, 4, 1), RandomParam("w", 4, 2, 2),
                              RandomParam("b", 1, 2, 3), RandomParam("y", 3, 4, 4)};
  EXPECT_LT(CheckOp(p, [](Graph& g, auto& ps) {
              const Var x = g.Param(ps[0]);
              const Var h = ag::AddBias(ag::MatMul(ag::Gelu(x), g.Param(ps[1])), g.Param(ps[2]));
              const Var t = ag::Tanh(ag::Add(x, ag::Scale(g.Param(ps[3]), -0.7)));
              return ag::Add(Probe(h), Probe(ag::AddConstant(t, Matrix::Ones(3, 4)), 5));
            }),
            1e-6);
}

TEST(Autograd, LayerNorm) {
  std::vector<Parameter> p = {RandomParam("x", 4, 6, 1), RandomParam("g", 1, 6, 2),
                              RandomParam("b", 1, 6, 3)};
  EXPECT_LT(CheckOp(p, [](Graph& g, auto& ps) {
              return Probe(ag::LayerNorm(g.Param(ps[0]), g.Param(ps[1]), g.Param(ps[2])));
            }),
            1e-6);
}

TEST(Autograd, IndexingOps) {
  std::vector<Parameter> p = {RandomParam("t", 7, 3, 1)};
  const std::vector<int> ids = {0, 3, 3, 6, 1};
  EXPECT_LT(CheckOp(p, [&](Graph& g, auto& ps) {
              const Var t = g.Param(ps[0]);
              const Var e = ag::Embedding(t, ids);
              const Var r = ag::GatherRows(e, std::vector<int>{4, 0, 0});
              const Var m = ag::GroupMeans(t, {{0, 1}, {2, 3, 4}, {6}});
              const Var c = ag::ConcatCols({r, m});
              const Var rows = ag::ConcatRows({c, c});
              return ag::Sum({Probe(rows), Probe(e, 7)});
            }),
            1e-6);
}

TEST(Autograd, Attention) {
  std::vector<Parameter> p = {RandomParam("q", 5, 8, 1), RandomParam("k", 5, 8, 2),
                              RandomParam("v", 5, 8, 3), RandomParam("m", 3, 8, 4)};
  for (bool causal : {false, true}) {
    EXPECT_LT(CheckOp(p, [&](Graph& g, auto& ps) {
                return Probe(ag::MultiHeadAttention(g.Param(ps[0]), g.Param(ps[1]),
                                                    g.Param(ps[2]), 2, causal));
              }),
              1e-6);
  }
  // Cross attention with a different key length.
  EXPECT_LT(CheckOp(p, [&](Graph& g, auto& ps) {
              return Probe(ag::MultiHeadAttention(g.Param(ps[3]), g.Param(ps[1]),
                                                  g.Param(ps[2]), 4, false));
            }),
            1e-6);
}

TEST(Autograd, CausalAttentionIgnoresFuture) {
  Parameter q = RandomParam("q", 6, 4, 1);
  Parameter k = RandomParam("k", 6, 4, 2);
  Parameter v = RandomParam("v", 6, 4, 3);
  Graph g(false);
  const Matrix before =
      ag::MultiHeadAttention(g.Param(q), g.Param(k), g.Param(v), 2, true)->val();
  k.value.row(5).setConstant(10.0);
  v.value.row(5).setConstant(-3.0);
  Graph g2(false);
  const Matrix after =
      ag::MultiHeadAttention(g2.Param(q), g2.Param(k), g2.Param(v), 2, true)->val();
  EXPECT_EQ(before.topRows(5), after.topRows(5));
  EXPECT_NE(before.row(5), after.row(5));
}

TEST(Autograd, Losses) {
  std::vector<Parameter> p = {RandomParam("z", 4, 5, 1), RandomParam("l", 3, 1, 2),
                              RandomParam("a", 1, 6, 3), RandomParam("p", 1, 6, 4),
                              RandomParam("n", 1, 6, 5), RandomParam("n2", 1, 6, 6)};
  const std::vector<int> targets = {1, 4, 0, 2};
  const std::vector<double> labels = {1.0, 0.0, 1.0};
  EXPECT_LT(CheckOp(p, [&](Graph& g, auto& ps) {
              const Var ce = ag::CrossEntropy(g.Param(ps[0]), targets, 0);
              const Var bce = ag::BinaryCrossEntropyWithLogits(g.Param(ps[1]), labels);
              const Var nce = ag::ContrastiveNce(g.Param(ps[2]), {g.Param(ps[3])},
                                                 {g.Param(ps[4]), g.Param(ps[5])}, 0.5);
              return ag::Sum({ce, bce, nce});
            }),
            1e-6);
}

TEST(Autograd, CrossEntropyValue) {
  Graph g;
  const Var logits = ag::Constant(Matrix{{2.0, 0.0}, {0.0, 0.0}});
  EXPECT_NEAR(ag::Scalar(ag::CrossEntropy(logits, std::vector<int>{0, 7}, 7)),
              -std::log(std::exp(2.0) / (std::exp(2.0) + 1.0)), 1e-15);
}

TEST(Autograd, BinaryCrossEntropyIsStableForLargeLogits) {
  const Var logits = ag::Constant(Matrix{{800.0}, {-800.0}});
  EXPECT_NEAR(ag::Scalar(ag::BinaryCrossEntropyWithLogits(logits, std::vector<double>{1, 0})),
              0.0, 1e-300);
  EXPECT_NEAR(ag::Scalar(ag::BinaryCrossEntropyWithLogits(logits, std::vector<double>{0, 0})),
              800.0, 1e-9);
}

TEST(GradientCheck, QuadraticSanity) {
  std::vector<Parameter> p = {RandomParam("x", 5, 5, 3)};
  const Matrix a = RandomParam("a", 5, 5, 4).value;
  const auto r = GradientCheck(
      p,
      [&](Graph& g) {
        const Var x = g.Param(p[0]);
        return ag::Add(ag::Dot(x, x), ag::Dot(x, ag::Constant(a)));
      },
      // Central differences are exact on a quadratic for any step, so a
      // wide step keeps rounding out of the comparison.
      1e-2, 25, 0);
  EXPECT_LT(r.max_relative_error, 1e-10);
  EXPECT_EQ(r.checked, 25u);
  EXPECT_EQ(r.worst_param, 0u);
  EXPECT_EQ(r.worst_name, "x");
  EXPECT_GE(r.worst_offset, 0);
  EXPECT_LT(r.worst_offset, 25);
}

TEST(GradientCheck, ReportsWorstEntryOfBrokenGradient) {
  // A deliberately wrong backward pass on one entry must be located.
  std::vector<Parameter> p = {RandomParam("ok", 2, 2, 1), RandomParam("bad", 2, 2, 2)};
  const auto r = GradientCheck(
      p,
      [&](Graph& g) {
        const Var bad = g.Param(p[1]);
        auto node = std::make_shared<ag::Node>();
        node->value = Matrix::Constant(1, 1, bad->val()(1, 0) * bad->val()(1, 0));
        node->requires_grad = true;
        node->parents = {bad};
        node->backward = [](ag::Node& self) {
          auto& parent = *self.parents[0];
          parent.GradBuffer()(1, 0) += 3.0 * self.grad(0, 0) * parent.val()(1, 0);
        };
        const Var ok = g.Param(p[0]);
        return ag::Add(ag::Dot(ok, ok), node);
      },
      1e-4, 8, 0);
  EXPECT_GT(r.max_relative_error, 0.1);
  EXPECT_EQ(r.worst_name, "bad");
  EXPECT_EQ(r.worst_param, 1u);
  EXPECT_EQ(r.worst_offset, 1);
}

}  // namespace
}  // namespace confit
