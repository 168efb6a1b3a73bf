/*
 * Copyright 2026 The metastress authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "diff/grad.hpp"

#include <cmath>
#include <unordered_set>

#include "common/error.hpp"

namespace metastress::diff {

namespace {

// iterative post-order over parents that require gradients
std::vector<NodePtr> topo_order(const NodePtr& root) {
  std::vector<NodePtr> order;
  std::unordered_set<const Node*> seen;
  struct Frame {
    NodePtr node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root, 0});
  seen.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    const auto& parents = f.node->parents();
    bool descended = false;
    while (f.next_parent < parents.size()) {
      const NodePtr& p = parents[f.next_parent++];
      if (p->requires_grad() && seen.insert(p.get()).second) {
        stack.push_back({p, 0});
        descended = true;
        break;
      }
    }
    if (!descended && stack.back().next_parent >= parents.size()) {
      order.push_back(stack.back().node);
      stack.pop_back();
    }
  }
  return order;  // parents before children
}

NodePtr ones_like(const Tensor& t) {
  return make_const(Tensor::full(t.shape, 1.0));
}

Tensor labels_onehot(const Tensor& labels, std::size_t rows,
                     std::size_t cols) {
  Tensor t = Tensor::zeros({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    t.at(i, static_cast<std::size_t>(labels.data[i])) = 1.0;
  }
  return t;
}

// adjoint contributions for each parent of n, given n's adjoint
std::vector<NodePtr> backward_op(const NodePtr& n, const NodePtr& a) {
  const auto& p = n->parents();
  const OpAux& aux = n->aux();
  switch (n->op()) {
    case Op::Leaf:
      return {};
    case Op::Add:
      return {a, a};
    case Op::Sub:
      return {a, scale(a, -1.0)};
    case Op::Mul:
      return {mul(a, p[1]), mul(a, p[0])};
    case Op::Div:
      return {div(a, p[1]),
              scale(mul(a, div(p[0], mul(p[1], p[1]))), -1.0)};
    case Op::MatMul:
      return {matmul(a, transpose(p[1])), matmul(transpose(p[0]), a)};
    case Op::Transpose:
      return {transpose(a)};
    case Op::Relu:
      return {mul(a, heaviside(p[0]))};
    case Op::Tanh:
      return {mul(a, sub(ones_like(n->value()), mul(n, n)))};
    case Op::Sigmoid:
      return {mul(a, mul(n, sub(ones_like(n->value()), n)))};
    case Op::Exp:
      return {mul(a, n)};
    case Op::Log:
      return {div(a, p[0])};
    case Op::Sum:
      return {broadcast(a, p[0]->value().shape)};
    case Op::Mean:
      return {scale(broadcast(a, p[0]->value().shape),
                    1.0 / static_cast<double>(p[0]->value().numel()))};
    case Op::Softmax: {
      // dx = y * (a - rowsum(a*y))
      const Shape& shp = n->value().shape;
      NodePtr rowsum = sum_to(mul(a, n), {shp[0], 1});
      return {mul(n, sub(a, broadcast(rowsum, shp)))};
    }
    case Op::SoftmaxXent: {
      const Tensor& logits = p[0]->value();
      std::size_t rows = logits.rows(), cols = logits.cols();
      NodePtr sm = softmax(p[0]);
      NodePtr onehot =
          make_const(labels_onehot(p[1]->value(), rows, cols));
      NodePtr d =
          scale(sub(sm, onehot), 1.0 / static_cast<double>(rows));
      return {mul(broadcast(a, logits.shape), d), NodePtr{}};
    }
    case Op::Broadcast:
      return {sum_to(a, p[0]->value().shape)};
    case Op::SumToShape:
      return {broadcast(a, p[0]->value().shape)};
    case Op::Reshape:
      return {reshape(a, p[0]->value().shape)};
    case Op::Concat: {
      std::vector<NodePtr> out;
      std::size_t off = 0;
      for (const NodePtr& part : p) {
        const Tensor& t = part->value();
        std::size_t len =
            t.rank() == 2 ? t.shape[aux.axis] : t.numel();
        NodePtr g = slice(a, aux.axis, off, len);
        out.push_back(t.rank() == 2 ? g : reshape(g, t.shape));
        off += len;
      }
      return out;
    }
    case Op::Slice: {
      OpAux pad;
      pad.axis = aux.axis;
      pad.start = aux.start;
      pad.target = p[0]->value().shape;
      return {apply(Op::PadSlice, {a}, std::move(pad))};
    }
    case Op::PadSlice: {
      const Tensor& t = p[0]->value();
      std::size_t len = t.rank() == 2 ? t.shape[aux.axis] : t.numel();
      NodePtr g = slice(a, aux.axis, aux.start, len);
      return {t.rank() == 2 ? g : reshape(g, t.shape)};
    }
    case Op::Scale:
      return {scale(a, aux.scale)};
    case Op::Heaviside:
      return {NodePtr{}};  // derivative is zero almost everywhere
  }
  return {};
}

}  // namespace

GradMap grad(const NodePtr& output, const std::vector<NodePtr>& wrt,
             bool create_graph) {
  if (output->value().numel() != 1) {
    fail(ErrorKind::Shape, "grad: output must be scalar, got shape " +
                               shape_str(output->value().shape));
  }
  std::unordered_map<const Node*, NodePtr> adjoint;
  if (output->requires_grad()) {
    std::vector<NodePtr> order = topo_order(output);
    adjoint[output.get()] = ones_like(output->value());
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const NodePtr& n = *it;
      auto found = adjoint.find(n.get());
      if (found == adjoint.end()) continue;
      const NodePtr& a = found->second;
      if (n->parents().empty()) continue;
      std::vector<NodePtr> contribs = backward_op(n, a);
      for (std::size_t i = 0; i < contribs.size(); ++i) {
        const NodePtr& parent = n->parents()[i];
        if (!parent->requires_grad() || !contribs[i]) continue;
        auto slot = adjoint.find(parent.get());
        if (slot == adjoint.end()) {
          adjoint[parent.get()] = contribs[i];
        } else {
          slot->second = add(slot->second, contribs[i]);
        }
      }
    }
  }
  GradMap result;
  for (const NodePtr& x : wrt) {
    auto it = adjoint.find(x.get());
    NodePtr g = it != adjoint.end()
                    ? it->second
                    : make_const(Tensor::zeros(x->value().shape));
    result.set(x, create_graph ? g : detach(g));
  }
  return result;
}

std::vector<double> finite_diff(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& at, double eps) {
  if (!(eps > 0.0)) fail(ErrorKind::Value, "finite_diff: eps must be > 0");
  std::vector<double> x = at;
  std::vector<double> g(at.size());
  for (std::size_t j = 0; j < at.size(); ++j) {
    x[j] = at[j] + eps;
    double hi = f(x);
    x[j] = at[j] - eps;
    double lo = f(x);
    x[j] = at[j];
    if (!std::isfinite(hi) || !std::isfinite(lo)) {
      fail(ErrorKind::NonFinite,
           "finite_diff: non-finite objective at coordinate " +
               std::to_string(j));
    }
    g[j] = (hi - lo) / (2.0 * eps);
  }
  return g;
}

}  // namespace metastress::diff
