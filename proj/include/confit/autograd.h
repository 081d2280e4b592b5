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

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// A graph is built implicitly by calling the op functions below; every op
// returns a Var holding its forward value and a closure that pushes its output
// gradient to its inputs. Backward() runs the closures in reverse topological
// order and accumulates parameter gradients into Parameter::grad.

#ifndef CONFIT_AUTOGRAD_H_
#define CONFIT_AUTOGRAD_H_

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace confit::ag {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// A named trainable array with its gradient accumulator.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  void ZeroGrad() { grad.setZero(value.rows(), value.cols()); }
};

struct Node {
  Matrix value;
  // Set for parameter leaves; the value lives in the Parameter.
  const Matrix* external = nullptr;
  Parameter* param = nullptr;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  const Matrix& val() const { return external ? *external : value; }
  // Allocates on first use.
  Matrix& GradBuffer();
};

using Var = std::shared_ptr<Node>;

// Scalar value of a 1x1 Var.
double Scalar(const Var& v);

// Holds the parameter leaves of one graph so each Parameter appears once.
// A graph built with track_gradients = false never writes to a Parameter, so
// several such graphs may share a model across threads.
class Graph {
 public:
  explicit Graph(bool track_gradients = true) : track_(track_gradients) {}

  Var Param(const Parameter& p);
  bool tracks_gradients() const { return track_; }
  // Parameters used so far, in first-use order.
  const std::vector<const Parameter*>& parameters() const { return order_; }

 private:
  bool track_;
  std::unordered_map<const Parameter*, Var> leaves_;
  std::vector<const Parameter*> order_;
};

Var Constant(Matrix value);

Var MatMul(const Var& a, const Var& b);
Var Add(const Var& a, const Var& b);
// Adds a 1 x n row to every row of a.
Var AddBias(const Var& a, const Var& bias);
Var AddConstant(const Var& a, const Matrix& c);
Var Scale(const Var& a, double factor);
// Tanh approximation of GELU.
Var Gelu(const Var& a);
Var Tanh(const Var& a);
// Row-wise layer normalization with learned gain and bias (both 1 x d).
Var LayerNorm(const Var& x, const Var& gain, const Var& bias,
              double eps = 1e-5);
// Rows of table selected by ids.
Var Embedding(const Var& table, std::span<const int> ids);
// Row i of the result is x.row(indices[i]); repeats allowed.
Var GatherRows(const Var& x, std::span<const int> indices);
// Row g of the result is the mean of x over the rows in groups[g].
Var GroupMeans(const Var& x, const std::vector<std::vector<int>>& groups);
Var ConcatCols(const std::vector<Var>& parts);
Var ConcatRows(const std::vector<Var>& parts);
// Sum of 1x1 values.
Var Sum(const std::vector<Var>& scalars);
// Sum of elementwise products, 1x1.
Var Dot(const Var& a, const Var& b);

// Multi-head scaled dot-product attention. q is n x d, k and v are m x d.
// With causal set, query i attends to keys 0..i only (requires n == m).
Var MultiHeadAttention(const Var& q, const Var& k, const Var& v, int heads,
                       bool causal);

// Sum over rows l with targets[l] != ignore_id of -log softmax(logits.row(l))
// at targets[l]. Returns 1x1.
Var CrossEntropy(const Var& logits, std::span<const int> targets,
                 int ignore_id);

// Sum of binary cross-entropy terms for an n x 1 column of logits.
Var BinaryCrossEntropyWithLogits(const Var& logits,
                                 std::span<const double> labels);

// Normalized-temperature contrast of one anchor (1 x d) against positives
// and negatives (each 1 x d):
//   sum_j -log( e^{cos(a,p_j)/tau} / (e^{cos(a,p_j)/tau} + sum_k e^{cos(a,n_k)/tau}) )
Var ContrastiveNce(const Var& anchor, const std::vector<Var>& positives,
                   const std::vector<Var>& negatives, double tau);

// Runs reverse-mode accumulation from a 1x1 root, scaling the seed gradient
// by seed. Parameter gradients are added to Parameter::grad.
void Backward(const Var& root, double seed = 1.0);

}  // namespace confit::ag

#endif  // CONFIT_AUTOGRAD_H_
