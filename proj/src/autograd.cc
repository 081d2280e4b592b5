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

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace confit::ag {
namespace {

using Backprop = std::function<void(Node&)>;

Var MakeNode(Matrix value, std::vector<Var> parents, Backprop backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const Var& p : parents) node->requires_grad |= p->requires_grad;
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return node;
}

void AccumulateGrad(Node& node, const Matrix& g) {
  if (!node.requires_grad) return;
  node.GradBuffer() += g;
}

void CheckShape(bool ok, const char* op) {
  if (!ok) throw std::invalid_argument(std::string("shape mismatch in ") + op);
}

}  // namespace

Matrix& Node::GradBuffer() {
  const Matrix& v = val();
  if (grad.rows() != v.rows() || grad.cols() != v.cols()) {
    grad = Matrix::Zero(v.rows(), v.cols());
  }
  return grad;
}

double Scalar(const Var& v) { return v->val()(0, 0); }

Var Graph::Param(const Parameter& p) {
  auto it = leaves_.find(&p);
  if (it != leaves_.end()) return it->second;
  auto node = std::make_shared<Node>();
  node->external = &p.value;
  if (track_) {
    node->param = const_cast<Parameter*>(&p);
    node->requires_grad = true;
  }
  leaves_.emplace(&p, node);
  order_.push_back(&p);
  return node;
}

Var Constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return node;
}

Var MatMul(const Var& a, const Var& b) {
  CheckShape(a->val().cols() == b->val().rows(), "MatMul");
  return MakeNode(a->val() * b->val(), {a, b}, [](Node& self) {
    Node& a = *self.parents[0];
    Node& b = *self.parents[1];
    if (a.requires_grad) a.GradBuffer() += self.grad * b.val().transpose();
    if (b.requires_grad) b.GradBuffer() += a.val().transpose() * self.grad;
  });
}

Var Add(const Var& a, const Var& b) {
  CheckShape(a->val().rows() == b->val().rows() &&
                 a->val().cols() == b->val().cols(),
             "Add");
  return MakeNode(a->val() + b->val(), {a, b}, [](Node& self) {
    AccumulateGrad(*self.parents[0], self.grad);
    AccumulateGrad(*self.parents[1], self.grad);
  });
}

Var AddBias(const Var& a, const Var& bias) {
  CheckShape(bias->val().rows() == 1 && bias->val().cols() == a->val().cols(),
             "AddBias");
  Matrix out = a->val().rowwise() + bias->val().row(0);
  return MakeNode(std::move(out), {a, bias}, [](Node& self) {
    AccumulateGrad(*self.parents[0], self.grad);
    Node& b = *self.parents[1];
    if (b.requires_grad) b.GradBuffer() += self.grad.colwise().sum();
  });
}

Var AddConstant(const Var& a, const Matrix& c) {
  CheckShape(a->val().rows() == c.rows() && a->val().cols() == c.cols(),
             "AddConstant");
  return MakeNode(a->val() + c, {a}, [](Node& self) {
    AccumulateGrad(*self.parents[0], self.grad);
  });
}

Var Scale(const Var& a, double factor) {
  return MakeNode(a->val() * factor, {a}, [factor](Node& self) {
    AccumulateGrad(*self.parents[0], self.grad * factor);
  });
}

Var Gelu(const Var& a) {
  static constexpr double kC = 0.7978845608028654;  // sqrt(2 / pi)
  static constexpr double kK = 0.044715;
  const Matrix& x = a->val();
  Matrix t = (kC * (x.array() + kK * x.array().cube())).tanh().matrix();
  Matrix out = (0.5 * x.array() * (1.0 + t.array())).matrix();
  return MakeNode(std::move(out), {a}, [t = std::move(t)](Node& self) {
    Node& a = *self.parents[0];
    if (!a.requires_grad) return;
    const auto x = a.val().array();
    const auto tt = t.array();
    auto d = 0.5 * (1.0 + tt) +
             0.5 * x * (1.0 - tt * tt) * kC * (1.0 + 3.0 * kK * x * x);
    a.GradBuffer() += (self.grad.array() * d).matrix();
  });
}

Var Tanh(const Var& a) {
  Matrix out = a->val().array().tanh().matrix();
  return MakeNode(out, {a}, [](Node& self) {
    Node& a = *self.parents[0];
    if (!a.requires_grad) return;
    a.GradBuffer() +=
        (self.grad.array() * (1.0 - self.value.array().square())).matrix();
  });
}

Var LayerNorm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Matrix& in = x->val();
  const Eigen::Index n = in.rows();
  const Eigen::Index d = in.cols();
  CheckShape(gain->val().cols() == d && bias->val().cols() == d, "LayerNorm");
  Matrix xhat(n, d);
  Vector inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mean = in.row(r).mean();
    const double var = (in.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (in.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gain->val().row(0).array()).matrix();
  out.rowwise() += bias->val().row(0);
  return MakeNode(
      std::move(out), {x, gain, bias},
      [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        Node& x = *self.parents[0];
        Node& g = *self.parents[1];
        Node& b = *self.parents[2];
        if (g.requires_grad) {
          g.GradBuffer() +=
              (self.grad.array() * xhat.array()).matrix().colwise().sum();
        }
        if (b.requires_grad) b.GradBuffer() += self.grad.colwise().sum();
        if (!x.requires_grad) return;
        const double d = static_cast<double>(xhat.cols());
        Matrix dxhat =
            (self.grad.array().rowwise() * g.val().row(0).array()).matrix();
        Matrix& gx = x.GradBuffer();
        for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
          const double sum_dxhat = dxhat.row(r).sum();
          const double sum_dxhat_xhat = dxhat.row(r).dot(xhat.row(r));
          gx.row(r) += (inv_std(r) / d) *
                       (d * dxhat.row(r).array() - sum_dxhat -
                        xhat.row(r).array() * sum_dxhat_xhat)
                           .matrix();
        }
      });
}

Var GatherRows(const Var& x, std::span<const int> indices) {
  const Matrix& in = x->val();
  Matrix out(static_cast<Eigen::Index>(indices.size()), in.cols());
  std::vector<int> idx(indices.begin(), indices.end());
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= in.rows()) {
      throw std::out_of_range("row index " + std::to_string(idx[i]) +
                              " out of range");
    }
    out.row(static_cast<Eigen::Index>(i)) = in.row(idx[i]);
  }
  return MakeNode(std::move(out), {x}, [idx = std::move(idx)](Node& self) {
    Node& x = *self.parents[0];
    if (!x.requires_grad) return;
    Matrix& g = x.GradBuffer();
    for (size_t i = 0; i < idx.size(); ++i) {
      g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    }
  });
}

Var Embedding(const Var& table, std::span<const int> ids) {
  return GatherRows(table, ids);
}

Var GroupMeans(const Var& x, const std::vector<std::vector<int>>& groups) {
  const Matrix& in = x->val();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(groups.size()), in.cols());
  for (size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) throw std::invalid_argument("empty row group");
    for (int r : groups[g]) {
      if (r < 0 || r >= in.rows()) throw std::out_of_range("group row index");
      out.row(static_cast<Eigen::Index>(g)) += in.row(r);
    }
    out.row(static_cast<Eigen::Index>(g)) /= static_cast<double>(groups[g].size());
  }
  return MakeNode(std::move(out), {x}, [groups](Node& self) {
    Node& x = *self.parents[0];
    if (!x.requires_grad) return;
    Matrix& gx = x.GradBuffer();
    for (size_t g = 0; g < groups.size(); ++g) {
      const double w = 1.0 / static_cast<double>(groups[g].size());
      for (int r : groups[g]) {
        gx.row(r) += w * self.grad.row(static_cast<Eigen::Index>(g));
      }
    }
  });
}

Var ConcatCols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("ConcatCols of nothing");
  const Eigen::Index rows = parts[0]->val().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    CheckShape(p->val().rows() == rows, "ConcatCols");
    cols += p->val().cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p->val().cols()) = p->val();
    at += p->val().cols();
  }
  return MakeNode(std::move(out), parts, [](Node& self) {
    Eigen::Index at = 0;
    for (const Var& p : self.parents) {
      const Eigen::Index c = p->val().cols();
      if (p->requires_grad) p->GradBuffer() += self.grad.middleCols(at, c);
      at += c;
    }
  });
}

Var ConcatRows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("ConcatRows of nothing");
  const Eigen::Index cols = parts[0]->val().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    CheckShape(p->val().cols() == cols, "ConcatRows");
    rows += p->val().rows();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p->val().rows()) = p->val();
    at += p->val().rows();
  }
  return MakeNode(std::move(out), parts, [](Node& self) {
    Eigen::Index at = 0;
    for (const Var& p : self.parents) {
      const Eigen::Index r = p->val().rows();
      if (p->requires_grad) p->GradBuffer() += self.grad.middleRows(at, r);
      at += r;
    }
  });
}

Var Sum(const std::vector<Var>& scalars) {
  double total = 0.0;
  for (const Var& s : scalars) {
    CheckShape(s->val().size() == 1, "Sum");
    total += Scalar(s);
  }
  return MakeNode(Matrix::Constant(1, 1, total), scalars, [](Node& self) {
    for (const Var& p : self.parents) AccumulateGrad(*p, self.grad);
  });
}

Var Dot(const Var& a, const Var& b) {
  CheckShape(a->val().rows() == b->val().rows() &&
                 a->val().cols() == b->val().cols(),
             "Dot");
  const double v = a->val().cwiseProduct(b->val()).sum();
  return MakeNode(Matrix::Constant(1, 1, v), {a, b}, [](Node& self) {
    const double g = self.grad(0, 0);
    Node& a = *self.parents[0];
    Node& b = *self.parents[1];
    if (a.requires_grad) a.GradBuffer() += g * b.val();
    if (b.requires_grad) b.GradBuffer() += g * a.val();
  });
}

Var MultiHeadAttention(const Var& q, const Var& k, const Var& v, int heads,
                       bool causal) {
  const Matrix& Q = q->val();
  const Matrix& K = k->val();
  const Matrix& V = v->val();
  const Eigen::Index n = Q.rows();
  const Eigen::Index m = K.rows();
  const Eigen::Index d = Q.cols();
  CheckShape(K.cols() == d && V.cols() == d && V.rows() == m && heads > 0 &&
                 d % heads == 0,
             "MultiHeadAttention");
  if (causal) CheckShape(n == m, "causal MultiHeadAttention");
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Matrix> probs(static_cast<size_t>(heads));
  Matrix out(n, d);
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index c0 = h * dh;
    Matrix s = (Q.middleCols(c0, dh) * K.middleCols(c0, dh).transpose()) * scale;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index visible = causal ? i + 1 : m;
      const double mx = s.row(i).head(visible).maxCoeff();
      double z = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) {
        if (j < visible) {
          s(i, j) = std::exp(s(i, j) - mx);
          z += s(i, j);
        } else {
          s(i, j) = 0.0;
        }
      }
      s.row(i) /= z;
    }
    out.middleCols(c0, dh) = s * V.middleCols(c0, dh);
    probs[static_cast<size_t>(h)] = std::move(s);
  }
  return MakeNode(
      std::move(out), {q, k, v},
      [probs = std::move(probs), heads, dh, scale](Node& self) {
        Node& q = *self.parents[0];
        Node& k = *self.parents[1];
        Node& v = *self.parents[2];
        for (int h = 0; h < heads; ++h) {
          const Eigen::Index c0 = h * dh;
          const Matrix& p = probs[static_cast<size_t>(h)];
          const auto g_out = self.grad.middleCols(c0, dh);
          if (v.requires_grad) {
            v.GradBuffer().middleCols(c0, dh) += p.transpose() * g_out;
          }
          if (!q.requires_grad && !k.requires_grad) continue;
          Matrix dp = g_out * v.val().middleCols(c0, dh).transpose();
          Vector row_dot = (dp.array() * p.array()).rowwise().sum();
          Matrix ds = (p.array() * (dp.colwise() - row_dot).array()).matrix();
          ds *= scale;
          if (q.requires_grad) {
            q.GradBuffer().middleCols(c0, dh) += ds * k.val().middleCols(c0, dh);
          }
          if (k.requires_grad) {
            k.GradBuffer().middleCols(c0, dh) +=
                ds.transpose() * q.val().middleCols(c0, dh);
          }
        }
      });
}

Var CrossEntropy(const Var& logits, std::span<const int> targets,
                 int ignore_id) {
  const Matrix& z = logits->val();
  CheckShape(static_cast<Eigen::Index>(targets.size()) == z.rows(),
             "CrossEntropy");
  std::vector<int> tgt(targets.begin(), targets.end());
  Matrix softmax = Matrix::Zero(z.rows(), z.cols());
  double total = 0.0;
  bool any = false;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const int t = tgt[static_cast<size_t>(r)];
    if (t == ignore_id) continue;
    if (t < 0 || t >= z.cols()) throw std::out_of_range("target id out of range");
    any = true;
    const double mx = z.row(r).maxCoeff();
    softmax.row(r) = (z.row(r).array() - mx).exp().matrix();
    const double sum = softmax.row(r).sum();
    softmax.row(r) /= sum;
    total += (mx + std::log(sum)) - z(r, t);
  }
  if (!any) throw std::invalid_argument("all target positions are padding");
  return MakeNode(Matrix::Constant(1, 1, total), {logits},
                  [softmax = std::move(softmax), tgt = std::move(tgt),
                   ignore_id](Node& self) {
                    Node& z = *self.parents[0];
                    if (!z.requires_grad) return;
                    const double g = self.grad(0, 0);
                    Matrix& gz = z.GradBuffer();
                    for (size_t r = 0; r < tgt.size(); ++r) {
                      if (tgt[r] == ignore_id) continue;
                      const auto row = static_cast<Eigen::Index>(r);
                      gz.row(row) += g * softmax.row(row);
                      gz(row, tgt[r]) -= g;
                    }
                  });
}

Var BinaryCrossEntropyWithLogits(const Var& logits,
                                 std::span<const double> labels) {
  const Matrix& z = logits->val();
  CheckShape(z.cols() == 1 && z.rows() == static_cast<Eigen::Index>(labels.size()),
             "BinaryCrossEntropyWithLogits");
  std::vector<double> y(labels.begin(), labels.end());
  Vector p(z.rows());
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double x = z(i, 0);
    // log(1 + e^{-|x|}) + max(x, 0) - x*y is the stable form.
    total += std::max(x, 0.0) - x * y[static_cast<size_t>(i)] +
             std::log1p(std::exp(-std::abs(x)));
    p(i) = 1.0 / (1.0 + std::exp(-x));
  }
  return MakeNode(Matrix::Constant(1, 1, total), {logits},
                  [p = std::move(p), y = std::move(y)](Node& self) {
                    Node& z = *self.parents[0];
                    if (!z.requires_grad) return;
                    const double g = self.grad(0, 0);
                    Matrix& gz = z.GradBuffer();
                    for (Eigen::Index i = 0; i < p.size(); ++i) {
                      gz(i, 0) += g * (p(i) - y[static_cast<size_t>(i)]);
                    }
                  });
}

Var ContrastiveNce(const Var& anchor, const std::vector<Var>& positives,
                   const std::vector<Var>& negatives, double tau) {
  if (positives.empty() || negatives.empty()) {
    throw std::invalid_argument("contrast needs a positive and a negative");
  }
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
  std::vector<Var> inputs;
  inputs.reserve(1 + positives.size() + negatives.size());
  inputs.push_back(anchor);
  inputs.insert(inputs.end(), positives.begin(), positives.end());
  inputs.insert(inputs.end(), negatives.begin(), negatives.end());

  const RowVector a = anchor->val().row(0);
  const Eigen::Index d = a.size();
  const double a_norm = a.norm();
  std::vector<double> norms;
  std::vector<double> cosines;
  for (size_t i = 1; i < inputs.size(); ++i) {
    const Matrix& b = inputs[i]->val();
    CheckShape(b.rows() == 1 && b.cols() == d, "ContrastiveNce");
    norms.push_back(b.norm());
  }
  if (a_norm == 0.0 ||
      std::any_of(norms.begin(), norms.end(), [](double n) { return n == 0.0; })) {
    throw std::invalid_argument("zero-norm representation in contrast");
  }
  for (size_t i = 1; i < inputs.size(); ++i) {
    cosines.push_back(a.dot(inputs[i]->val().row(0)) / (a_norm * norms[i - 1]));
  }
  const size_t np = positives.size();
  const size_t nn = negatives.size();
  // dL/dcos for each compared vector.
  std::vector<double> dcos(np + nn, 0.0);
  double total = 0.0;
  for (size_t j = 0; j < np; ++j) {
    const double sp = cosines[j] / tau;
    double mx = sp;
    for (size_t k = 0; k < nn; ++k) mx = std::max(mx, cosines[np + k] / tau);
    double z = std::exp(sp - mx);
    for (size_t k = 0; k < nn; ++k) z += std::exp(cosines[np + k] / tau - mx);
    total += (mx + std::log(z)) - sp;
    dcos[j] += (std::exp(sp - mx) / z - 1.0) / tau;
    for (size_t k = 0; k < nn; ++k) {
      dcos[np + k] += std::exp(cosines[np + k] / tau - mx) / z / tau;
    }
  }
  return MakeNode(
      Matrix::Constant(1, 1, total), inputs,
      [dcos = std::move(dcos), cosines = std::move(cosines),
       norms = std::move(norms), a_norm](Node& self) {
        const double g = self.grad(0, 0);
        Node& anchor = *self.parents[0];
        const RowVector a = anchor.val().row(0);
        RowVector ga = RowVector::Zero(a.size());
        for (size_t i = 0; i < dcos.size(); ++i) {
          Node& other = *self.parents[i + 1];
          const RowVector b = other.val().row(0);
          const double c = cosines[i];
          const double w = g * dcos[i];
          ga += w * (b / (a_norm * norms[i]) - c * a / (a_norm * a_norm));
          if (other.requires_grad) {
            other.GradBuffer().row(0) +=
                w * (a / (a_norm * norms[i]) - c * b / (norms[i] * norms[i]));
          }
        }
        if (anchor.requires_grad) anchor.GradBuffer().row(0) += ga;
      });
}

void Backward(const Var& root, double seed) {
  if (root->val().size() != 1) {
    throw std::invalid_argument("Backward requires a scalar root");
  }
  if (!root->requires_grad) return;
  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->GradBuffer()(0, 0) += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->grad.size() == 0) continue;
    if (node->backward) node->backward(*node);
    if (node->param != nullptr) {
      Parameter& p = *node->param;
      if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
        p.ZeroGrad();
      }
      p.grad += node->grad;
    }
  }
}

}  // namespace confit::ag
