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

#include "diff/tensor.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "common/error.hpp"

namespace metastress::diff {

namespace {
using EigenRowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<const EigenRowMat>;
using MutMatMap = Eigen::Map<EigenRowMat>;

Tensor unary_map(const Tensor& a, double (*f)(double)) {
  Tensor r = a;
  for (double& v : r.data) v = f(v);
  return r;
}
}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

Tensor::Tensor(Shape s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (shape_numel(shape) != data.size()) {
    fail(ErrorKind::Shape, "tensor: shape " + shape_str(shape) +
                               " does not match data size " +
                               std::to_string(data.size()));
  }
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::zeros(Shape s) {
  std::size_t n = shape_numel(s);
  return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape s, double v) {
  std::size_t n = shape_numel(s);
  return Tensor(std::move(s), std::vector<double>(n, v));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t = zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

double Tensor::scalar_value() const {
  if (numel() != 1) {
    fail(ErrorKind::Shape,
         "scalar_value on non-scalar tensor " + shape_str(shape));
  }
  return data[0];
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor ew_add(const Tensor& a, const Tensor& b) {
  Tensor r = a;
  for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] += b.data[i];
  return r;
}

Tensor ew_sub(const Tensor& a, const Tensor& b) {
  Tensor r = a;
  for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] -= b.data[i];
  return r;
}

Tensor ew_mul(const Tensor& a, const Tensor& b) {
  Tensor r = a;
  for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] *= b.data[i];
  return r;
}

Tensor ew_div(const Tensor& a, const Tensor& b) {
  Tensor r = a;
  for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] /= b.data[i];
  return r;
}

Tensor ew_scale(const Tensor& a, double c) {
  Tensor r = a;
  for (double& v : r.data) v *= c;
  return r;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor r = Tensor::zeros({m, n});
  MatMap A(a.data.data(), static_cast<Eigen::Index>(m),
           static_cast<Eigen::Index>(k));
  MatMap B(b.data.data(), static_cast<Eigen::Index>(k),
           static_cast<Eigen::Index>(n));
  MutMatMap R(r.data.data(), static_cast<Eigen::Index>(m),
              static_cast<Eigen::Index>(n));
  R.noalias() = A * B;
  return r;
}

Tensor transpose(const Tensor& a) {
  std::size_t m = a.rows(), n = a.cols();
  Tensor r = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) r.at(j, i) = a.at(i, j);
  }
  return r;
}

Tensor map_relu(const Tensor& a) {
  Tensor r = a;
  for (double& v : r.data) v = v > 0.0 ? v : 0.0;
  return r;
}

Tensor map_heaviside(const Tensor& a) {
  Tensor r = a;
  for (double& v : r.data) v = v > 0.0 ? 1.0 : 0.0;
  return r;
}

Tensor map_tanh(const Tensor& a) { return unary_map(a, std::tanh); }

Tensor map_sigmoid(const Tensor& a) {
  Tensor r = a;
  for (double& v : r.data) {
    // stable in both tails
    v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                 : std::exp(v) / (1.0 + std::exp(v));
  }
  return r;
}

Tensor map_exp(const Tensor& a) { return unary_map(a, std::exp); }

Tensor map_log(const Tensor& a) { return unary_map(a, std::log); }

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data) s += v;  // fixed left-to-right order
  return Tensor::scalar(s);
}

Tensor mean_all(const Tensor& a) {
  return Tensor::scalar(sum_all(a).data[0] /
                        static_cast<double>(a.numel()));
}

bool broadcastable(const Shape& from, const Shape& to) {
  if (from == to) return true;
  if (from.empty()) return true;
  if (to.size() != 2) return false;
  if (from.size() == 1) return from[0] == to[1];
  if (from.size() == 2) {
    if (from[0] == 1 && from[1] == to[1]) return true;
    if (from[1] == 1 && from[0] == to[0]) return true;
  }
  return false;
}

Tensor broadcast_to(const Tensor& a, const Shape& target) {
  if (a.shape == target) {
    Tensor r = a;
    r.shape = target;
    return r;
  }
  Tensor r = Tensor::zeros(target);
  std::size_t rows = r.rows(), cols = r.cols();
  if (a.shape.empty()) {
    for (double& v : r.data) v = a.data[0];
  } else if (a.rank() == 1 || (a.rank() == 2 && a.shape[0] == 1)) {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) r.at(i, j) = a.data[j];
    }
  } else {  // column vector {r,1}
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) r.at(i, j) = a.data[i];
    }
  }
  return r;
}

Tensor sum_to_shape(const Tensor& a, const Shape& target) {
  if (a.shape == target) return a;
  Tensor r = Tensor::zeros(target);
  std::size_t rows = a.rows(), cols = a.cols();
  if (target.empty()) {
    return sum_all(a);
  }
  if (target.size() == 1 || (target.size() == 2 && target[0] == 1)) {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) r.data[j] += a.at(i, j);
    }
  } else {  // {r,1}
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) r.data[i] += a.at(i, j);
    }
  }
  return r;
}

Tensor reshape(const Tensor& a, const Shape& target) {
  Tensor r = a;
  r.shape = target;
  return r;
}

Tensor concat(const std::vector<const Tensor*>& parts, std::size_t axis) {
  if (axis == 0 && parts[0]->rank() <= 1) {
    std::vector<double> data;
    std::size_t total = 0;
    for (const Tensor* p : parts) total += p->numel();
    data.reserve(total);
    for (const Tensor* p : parts) {
      data.insert(data.end(), p->data.begin(), p->data.end());
    }
    return Tensor({total}, std::move(data));
  }
  // rank-2
  std::size_t rows = parts[0]->rows(), cols = parts[0]->cols();
  if (axis == 0) {
    std::size_t total_rows = 0;
    for (const Tensor* p : parts) total_rows += p->rows();
    Tensor r = Tensor::zeros({total_rows, cols});
    std::size_t off = 0;
    for (const Tensor* p : parts) {
      std::copy(p->data.begin(), p->data.end(), r.data.begin() + static_cast<std::ptrdiff_t>(off));
      off += p->numel();
    }
    return r;
  }
  std::size_t total_cols = 0;
  for (const Tensor* p : parts) total_cols += p->cols();
  Tensor r = Tensor::zeros({rows, total_cols});
  std::size_t col_off = 0;
  for (const Tensor* p : parts) {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < p->cols(); ++j) {
        r.at(i, col_off + j) = p->at(i, j);
      }
    }
    col_off += p->cols();
  }
  return r;
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start,
             std::size_t len) {
  if (a.rank() <= 1) {
    Tensor r = Tensor::zeros({len});
    std::copy(a.data.begin() + static_cast<std::ptrdiff_t>(start),
              a.data.begin() + static_cast<std::ptrdiff_t>(start + len),
              r.data.begin());
    return r;
  }
  if (axis == 0) {
    Tensor r = Tensor::zeros({len, a.cols()});
    std::copy(a.data.begin() + static_cast<std::ptrdiff_t>(start * a.cols()),
              a.data.begin() +
                  static_cast<std::ptrdiff_t>((start + len) * a.cols()),
              r.data.begin());
    return r;
  }
  Tensor r = Tensor::zeros({a.rows(), len});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < len; ++j) r.at(i, j) = a.at(i, start + j);
  }
  return r;
}

Tensor pad_slice(const Tensor& a, const Shape& target, std::size_t axis,
                 std::size_t start) {
  Tensor r = Tensor::zeros(target);
  if (r.rank() <= 1) {
    std::copy(a.data.begin(), a.data.end(),
              r.data.begin() + static_cast<std::ptrdiff_t>(start));
    return r;
  }
  if (axis == 0) {
    std::copy(a.data.begin(), a.data.end(),
              r.data.begin() + static_cast<std::ptrdiff_t>(start * r.cols()));
    return r;
  }
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) r.at(i, start + j) = a.at(i, j);
  }
  return r;
}

Tensor softmax_rows(const Tensor& logits) {
  std::size_t rows = logits.rows(), cols = logits.cols();
  Tensor r = Tensor::zeros(logits.shape);
  for (std::size_t i = 0; i < rows; ++i) {
    double m = logits.at(i, 0);
    for (std::size_t j = 1; j < cols; ++j) m = std::max(m, logits.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(logits.at(i, j) - m);
    for (std::size_t j = 0; j < cols; ++j) {
      r.at(i, j) = std::exp(logits.at(i, j) - m) / z;
    }
  }
  return r;
}

std::size_t argmax_row(const Tensor& t, std::size_t row) {
  std::size_t best = 0;
  double bv = t.at(row, 0);
  for (std::size_t j = 1; j < t.cols(); ++j) {
    if (t.at(row, j) > bv) {
      bv = t.at(row, j);
      best = j;
    }
  }
  return best;
}

}  // namespace metastress::diff
