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

#include <cstddef>
#include <string>
#include <vector>

namespace metastress::diff {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

// Dense row-major tensor of doubles, rank 0..2. Scalars have empty shape.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> d);

  static Tensor scalar(double v);
  static Tensor zeros(Shape s);
  static Tensor full(Shape s, double v);
  static Tensor identity(std::size_t n);

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  // rank-2 accessors; rank-0/1 tensors are treated as a single row
  std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
  std::size_t cols() const {
    if (shape.size() == 2) return shape[1];
    if (shape.size() == 1) return shape[0];
    return 1;
  }
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  double scalar_value() const;
  bool all_finite() const;
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// --- value kernels -------------------------------------------------------
// Elementwise ops require identical shapes (checked by the graph layer).

Tensor ew_add(const Tensor& a, const Tensor& b);
Tensor ew_sub(const Tensor& a, const Tensor& b);
Tensor ew_mul(const Tensor& a, const Tensor& b);
Tensor ew_div(const Tensor& a, const Tensor& b);
Tensor ew_scale(const Tensor& a, double c);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor map_relu(const Tensor& a);
Tensor map_heaviside(const Tensor& a);
Tensor map_tanh(const Tensor& a);
Tensor map_sigmoid(const Tensor& a);
Tensor map_exp(const Tensor& a);
Tensor map_log(const Tensor& a);  // caller checks positivity

Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// target must be reachable by repeating rows/cols: {} -> any,
// {c}/{1,c} -> {r,c}, {r,1} -> {r,c}
bool broadcastable(const Shape& from, const Shape& to);
Tensor broadcast_to(const Tensor& a, const Shape& target);
// adjoint of broadcast_to: sums collapsed dimensions (left-to-right)
Tensor sum_to_shape(const Tensor& a, const Shape& target);

Tensor reshape(const Tensor& a, const Shape& target);
Tensor concat(const std::vector<const Tensor*>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start,
             std::size_t len);
// inverse of slice: embeds `a` into zeros of shape `target` at `start`
Tensor pad_slice(const Tensor& a, const Shape& target, std::size_t axis,
                 std::size_t start);

// rowwise, log-sum-exp stabilized
Tensor softmax_rows(const Tensor& logits);

// argmax per row; ties broken by lowest index
std::size_t argmax_row(const Tensor& t, std::size_t row);

}  // namespace metastress::diff
