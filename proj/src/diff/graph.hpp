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

#pragma once

#include <memory>
#include <vector>

#include "diff/tensor.hpp"

namespace metastress::diff {

// Dynamic tape: every op records a node, graphs are rebuilt per forward pass.
// Nodes are immutable once created; a graph is confined to one thread while
// it is being built or differentiated.

enum class Op {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  MatMul,
  Transpose,
  Relu,
  Tanh,
  Sigmoid,
  Exp,
  Log,
  Sum,
  Mean,
  Softmax,
  SoftmaxXent,
  Broadcast,
  SumToShape,
  Reshape,
  Concat,
  Slice,
  PadSlice,
  Scale,
  Heaviside,
};

const char* op_name(Op op);

struct OpAux {
  double scale = 1.0;                  // Scale
  std::size_t axis = 0;                // Concat / Slice / PadSlice
  std::size_t start = 0;               // Slice / PadSlice
  std::size_t len = 0;                 // Slice
  Shape target;                        // Broadcast / SumToShape / Reshape / PadSlice
};

class Node;
using NodePtr = std::shared_ptr<const Node>;

class Node {
public:
  Node(Tensor value, Op op, std::vector<NodePtr> parents, bool requires_grad,
       OpAux aux)
      : value_(std::move(value)),
        op_(op),
        parents_(std::move(parents)),
        requires_grad_(requires_grad),
        aux_(std::move(aux)) {}

  const Tensor& value() const { return value_; }
  Op op() const { return op_; }
  const std::vector<NodePtr>& parents() const { return parents_; }
  bool requires_grad() const { return requires_grad_; }
  const OpAux& aux() const { return aux_; }

private:
  Tensor value_;
  Op op_;
  std::vector<NodePtr> parents_;
  bool requires_grad_;
  OpAux aux_;
};

NodePtr make_leaf(Tensor value, bool requires_grad = true);
NodePtr make_const(Tensor value);
NodePtr scalar_const(double v);

// value copied into a fresh leaf that does not track gradients
NodePtr detach(const NodePtr& x);

// Generic entry point. Checks shape compatibility and rejects non-finite
// results; errors name the op and the offending shapes.
NodePtr apply(Op op, std::vector<NodePtr> inputs, OpAux aux = {});

// --- op helpers -----------------------------------------------------------
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr div(const NodePtr& a, const NodePtr& b);
NodePtr matmul(const NodePtr& a, const NodePtr& b);
NodePtr transpose(const NodePtr& a);
NodePtr relu(const NodePtr& a);
NodePtr tanh(const NodePtr& a);
NodePtr sigmoid(const NodePtr& a);
NodePtr exp(const NodePtr& a);
NodePtr log(const NodePtr& a);
NodePtr sum(const NodePtr& a);
NodePtr mean(const NodePtr& a);
NodePtr softmax(const NodePtr& a);
// labels: one value per row of logits, integral, in [0, cols)
NodePtr softmax_xent(const NodePtr& logits, const NodePtr& labels);
NodePtr broadcast(const NodePtr& a, Shape target);
NodePtr sum_to(const NodePtr& a, Shape target);
NodePtr reshape(const NodePtr& a, Shape target);
NodePtr concat(std::vector<NodePtr> parts, std::size_t axis);
NodePtr slice(const NodePtr& a, std::size_t axis, std::size_t start,
              std::size_t len);
NodePtr scale(const NodePtr& a, double c);
NodePtr heaviside(const NodePtr& a);

}  // namespace metastress::diff
