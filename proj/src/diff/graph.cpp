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

#include "diff/graph.hpp"

#include <cmath>
#include <string>

#include "common/error.hpp"

namespace metastress::diff {

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::Relu: return "relu";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Softmax: return "softmax";
    case Op::SoftmaxXent: return "softmax_xent";
    case Op::Broadcast: return "broadcast";
    case Op::SumToShape: return "sum_to_shape";
    case Op::Reshape: return "reshape";
    case Op::Concat: return "concat";
    case Op::Slice: return "slice";
    case Op::PadSlice: return "pad_slice";
    case Op::Scale: return "elementwise_scale";
    case Op::Heaviside: return "heaviside";
  }
  return "?";
}

namespace {

[[noreturn]] void shape_fail(Op op, const std::string& detail) {
  fail(ErrorKind::Shape, std::string(op_name(op)) + ": " + detail);
}

void require_same_shape(Op op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    shape_fail(op, "incompatible shapes " + shape_str(a.shape) + " and " +
                       shape_str(b.shape));
  }
}

void require_arity(Op op, const std::vector<NodePtr>& in, std::size_t n) {
  if (in.size() != n) {
    shape_fail(op, "expects " + std::to_string(n) + " inputs, got " +
                       std::to_string(in.size()));
  }
}

bool arithmetic_op(Op op) {
  switch (op) {
    case Op::Leaf:
    case Op::Transpose:
    case Op::Broadcast:
    case Op::Reshape:
    case Op::Concat:
    case Op::Slice:
    case Op::PadSlice:
    case Op::Heaviside:
      return false;  // pure data movement of already-checked values
    default:
      return true;
  }
}

Tensor forward_value(Op op, const std::vector<NodePtr>& in, const OpAux& aux) {
  switch (op) {
    case Op::Leaf:
      shape_fail(op, "leaf nodes are created with make_leaf");
    case Op::Add:
      require_arity(op, in, 2);
      require_same_shape(op, in[0]->value(), in[1]->value());
      return ew_add(in[0]->value(), in[1]->value());
    case Op::Sub:
      require_arity(op, in, 2);
      require_same_shape(op, in[0]->value(), in[1]->value());
      return ew_sub(in[0]->value(), in[1]->value());
    case Op::Mul:
      require_arity(op, in, 2);
      require_same_shape(op, in[0]->value(), in[1]->value());
      return ew_mul(in[0]->value(), in[1]->value());
    case Op::Div:
      require_arity(op, in, 2);
      require_same_shape(op, in[0]->value(), in[1]->value());
      return ew_div(in[0]->value(), in[1]->value());
    case Op::MatMul: {
      require_arity(op, in, 2);
      const Tensor& a = in[0]->value();
      const Tensor& b = in[1]->value();
      if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0]) {
        shape_fail(op, "incompatible shapes " + shape_str(a.shape) + " and " +
                           shape_str(b.shape));
      }
      return matmul(a, b);
    }
    case Op::Transpose: {
      require_arity(op, in, 1);
      if (in[0]->value().rank() != 2) {
        shape_fail(op, "needs rank-2 input, got " +
                           shape_str(in[0]->value().shape));
      }
      return transpose(in[0]->value());
    }
    case Op::Relu:
      require_arity(op, in, 1);
      return map_relu(in[0]->value());
    case Op::Tanh:
      require_arity(op, in, 1);
      return map_tanh(in[0]->value());
    case Op::Sigmoid:
      require_arity(op, in, 1);
      return map_sigmoid(in[0]->value());
    case Op::Exp:
      require_arity(op, in, 1);
      return map_exp(in[0]->value());
    case Op::Log: {
      require_arity(op, in, 1);
      for (double v : in[0]->value().data) {
        if (!(v > 0.0)) {
          fail(ErrorKind::Domain,
               "log: non-positive input value " + std::to_string(v));
        }
      }
      return map_log(in[0]->value());
    }
    case Op::Sum:
      require_arity(op, in, 1);
      return sum_all(in[0]->value());
    case Op::Mean:
      require_arity(op, in, 1);
      return mean_all(in[0]->value());
    case Op::Softmax:
      require_arity(op, in, 1);
      if (in[0]->value().rank() != 2) {
        shape_fail(op, "needs rank-2 logits, got " +
                           shape_str(in[0]->value().shape));
      }
      return softmax_rows(in[0]->value());
    case Op::SoftmaxXent: {
      require_arity(op, in, 2);
      const Tensor& logits = in[0]->value();
      const Tensor& labels = in[1]->value();
      if (logits.rank() != 2 || labels.numel() != logits.rows()) {
        shape_fail(op, "logits " + shape_str(logits.shape) + " vs labels " +
                           shape_str(labels.shape));
      }
      std::size_t rows = logits.rows(), cols = logits.cols();
      double total = 0.0;
      for (std::size_t i = 0; i < rows; ++i) {
        double lf = labels.data[i];
        if (lf != std::floor(lf) || lf < 0.0 ||
            lf >= static_cast<double>(cols)) {
          fail(ErrorKind::Value,
               "softmax_xent: label " + std::to_string(lf) +
                   " out of range [0," + std::to_string(cols) + ")");
        }
        std::size_t label = static_cast<std::size_t>(lf);
        double m = logits.at(i, 0);
        for (std::size_t j = 1; j < cols; ++j) {
          m = std::max(m, logits.at(i, j));
        }
        double z = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          z += std::exp(logits.at(i, j) - m);
        }
        total += m + std::log(z) - logits.at(i, label);
      }
      return Tensor::scalar(total / static_cast<double>(rows));
    }
    case Op::Broadcast: {
      require_arity(op, in, 1);
      if (!broadcastable(in[0]->value().shape, aux.target)) {
        shape_fail(op, "cannot broadcast " + shape_str(in[0]->value().shape) +
                           " to " + shape_str(aux.target));
      }
      return broadcast_to(in[0]->value(), aux.target);
    }
    case Op::SumToShape: {
      require_arity(op, in, 1);
      if (!broadcastable(aux.target, in[0]->value().shape)) {
        shape_fail(op, "cannot reduce " + shape_str(in[0]->value().shape) +
                           " to " + shape_str(aux.target));
      }
      return sum_to_shape(in[0]->value(), aux.target);
    }
    case Op::Reshape: {
      require_arity(op, in, 1);
      if (shape_numel(aux.target) != in[0]->value().numel()) {
        shape_fail(op, "cannot reshape " + shape_str(in[0]->value().shape) +
                           " to " + shape_str(aux.target));
      }
      return reshape(in[0]->value(), aux.target);
    }
    case Op::Concat: {
      if (in.empty()) shape_fail(op, "needs at least one input");
      std::vector<const Tensor*> parts;
      parts.reserve(in.size());
      std::size_t rank = in[0]->value().rank();
      if (aux.axis > 1 || (rank <= 1 && aux.axis != 0)) {
        shape_fail(op, "bad axis " + std::to_string(aux.axis));
      }
      for (const NodePtr& p : in) {
        const Tensor& t = p->value();
        if (t.rank() != rank ||
            (rank == 2 && aux.axis == 0 && t.cols() != in[0]->value().cols()) ||
            (rank == 2 && aux.axis == 1 && t.rows() != in[0]->value().rows())) {
          shape_fail(op, "ragged inputs " + shape_str(in[0]->value().shape) +
                             " vs " + shape_str(t.shape));
        }
        parts.push_back(&t);
      }
      return concat(parts, aux.axis);
    }
    case Op::Slice: {
      require_arity(op, in, 1);
      const Tensor& t = in[0]->value();
      std::size_t extent = t.rank() == 2 ? t.shape[aux.axis] : t.numel();
      if (aux.axis > 1 || aux.start + aux.len > extent) {
        shape_fail(op, "slice [" + std::to_string(aux.start) + "," +
                           std::to_string(aux.start + aux.len) +
                           ") out of bounds for " + shape_str(t.shape));
      }
      return slice(t, aux.axis, aux.start, aux.len);
    }
    case Op::PadSlice: {
      require_arity(op, in, 1);
      const Tensor& t = in[0]->value();
      std::size_t extent =
          aux.target.size() == 2 ? aux.target[aux.axis] : shape_numel(aux.target);
      std::size_t part = t.rank() == 2 ? t.shape[aux.axis] : t.numel();
      if (aux.start + part > extent) {
        shape_fail(op, "cannot embed " + shape_str(t.shape) + " into " +
                           shape_str(aux.target));
      }
      return pad_slice(t, aux.target, aux.axis, aux.start);
    }
    case Op::Scale:
      require_arity(op, in, 1);
      return ew_scale(in[0]->value(), aux.scale);
    case Op::Heaviside:
      require_arity(op, in, 1);
      return map_heaviside(in[0]->value());
  }
  shape_fail(op, "unhandled op");
}

}  // namespace

NodePtr make_leaf(Tensor value, bool requires_grad) {
  if (!value.all_finite()) {
    fail(ErrorKind::NonFinite, "leaf: non-finite tensor value");
  }
  return std::make_shared<Node>(std::move(value), Op::Leaf,
                                std::vector<NodePtr>{}, requires_grad, OpAux{});
}

NodePtr make_const(Tensor value) { return make_leaf(std::move(value), false); }

NodePtr scalar_const(double v) { return make_const(Tensor::scalar(v)); }

NodePtr detach(const NodePtr& x) { return make_const(x->value()); }

NodePtr apply(Op op, std::vector<NodePtr> inputs, OpAux aux) {
  Tensor value = forward_value(op, inputs, aux);
  if (arithmetic_op(op) && !value.all_finite()) {
    fail(ErrorKind::NonFinite,
         std::string(op_name(op)) + ": produced a non-finite value");
  }
  bool requires_grad = false;
  if (op != Op::Heaviside) {
    for (const NodePtr& p : inputs) requires_grad |= p->requires_grad();
  }
  return std::make_shared<Node>(std::move(value), op, std::move(inputs),
                                requires_grad, std::move(aux));
}

NodePtr add(const NodePtr& a, const NodePtr& b) { return apply(Op::Add, {a, b}); }
NodePtr sub(const NodePtr& a, const NodePtr& b) { return apply(Op::Sub, {a, b}); }
NodePtr mul(const NodePtr& a, const NodePtr& b) { return apply(Op::Mul, {a, b}); }
NodePtr div(const NodePtr& a, const NodePtr& b) { return apply(Op::Div, {a, b}); }
NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  return apply(Op::MatMul, {a, b});
}
NodePtr transpose(const NodePtr& a) { return apply(Op::Transpose, {a}); }
NodePtr relu(const NodePtr& a) { return apply(Op::Relu, {a}); }
NodePtr tanh(const NodePtr& a) { return apply(Op::Tanh, {a}); }
NodePtr sigmoid(const NodePtr& a) { return apply(Op::Sigmoid, {a}); }
NodePtr exp(const NodePtr& a) { return apply(Op::Exp, {a}); }
NodePtr log(const NodePtr& a) { return apply(Op::Log, {a}); }
NodePtr sum(const NodePtr& a) { return apply(Op::Sum, {a}); }
NodePtr mean(const NodePtr& a) { return apply(Op::Mean, {a}); }
NodePtr softmax(const NodePtr& a) { return apply(Op::Softmax, {a}); }
NodePtr softmax_xent(const NodePtr& logits, const NodePtr& labels) {
  return apply(Op::SoftmaxXent, {logits, labels});
}
NodePtr broadcast(const NodePtr& a, Shape target) {
  OpAux aux;
  aux.target = std::move(target);
  return apply(Op::Broadcast, {a}, std::move(aux));
}
NodePtr sum_to(const NodePtr& a, Shape target) {
  OpAux aux;
  aux.target = std::move(target);
  return apply(Op::SumToShape, {a}, std::move(aux));
}
NodePtr reshape(const NodePtr& a, Shape target) {
  OpAux aux;
  aux.target = std::move(target);
  return apply(Op::Reshape, {a}, std::move(aux));
}
NodePtr concat(std::vector<NodePtr> parts, std::size_t axis) {
  OpAux aux;
  aux.axis = axis;
  return apply(Op::Concat, std::move(parts), std::move(aux));
}
NodePtr slice(const NodePtr& a, std::size_t axis, std::size_t start,
              std::size_t len) {
  OpAux aux;
  aux.axis = axis;
  aux.start = start;
  aux.len = len;
  return apply(Op::Slice, {a}, std::move(aux));
}
NodePtr scale(const NodePtr& a, double c) {
  OpAux aux;
  aux.scale = c;
  return apply(Op::Scale, {a}, std::move(aux));
}
NodePtr heaviside(const NodePtr& a) { return apply(Op::Heaviside, {a}); }

}  // namespace metastress::diff
