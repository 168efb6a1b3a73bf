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

#include "learner/mlp.hpp"

#include <cmath>

#include "common/error.hpp"
#include "common/rng.hpp"

namespace metastress::learner {

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  fail(ErrorKind::Config, "unknown activation '" + s + "'");
}

const char* activation_name(Activation a) {
  return a == Activation::Relu ? "relu" : "tanh";
}

void MlpSpec::validate() const {
  if (input_dim < 1) fail(ErrorKind::Config, "mlp: input_dim must be >= 1");
  if (num_classes < 2) fail(ErrorKind::Config, "mlp: num_classes must be >= 2");
  for (std::size_t h : hidden_dims) {
    if (h < 1) fail(ErrorKind::Config, "mlp: hidden dims must be >= 1");
  }
}

LayoutPtr MlpSpec::layout() const {
  validate();
  std::vector<std::pair<std::string, diff::Shape>> entries;
  std::size_t in = input_dim;
  for (std::size_t i = 0; i < hidden_dims.size(); ++i) {
    entries.push_back({"W" + std::to_string(i), {in, hidden_dims[i]}});
    entries.push_back({"b" + std::to_string(i), {hidden_dims[i]}});
    in = hidden_dims[i];
  }
  std::size_t last = hidden_dims.size();
  entries.push_back({"W" + std::to_string(last), {in, num_classes}});
  entries.push_back({"b" + std::to_string(last), {num_classes}});
  return ParamLayout::build(std::move(entries));
}

ParamVector init_params(const MlpSpec& spec, std::uint64_t seed) {
  LayoutPtr layout = spec.layout();
  ParamVector pv = ParamVector::zeros(layout);
  Rng rng(seed);
  for (const ParamEntry& e : layout->entries()) {
    if (e.shape.size() != 2) continue;  // biases stay zero
    double fan_in = static_cast<double>(e.shape[0]);
    double fan_out = static_cast<double>(e.shape[1]);
    double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::size_t i = 0; i < e.size; ++i) {
      pv.data[e.offset + i] = rng.uniform(-bound, bound);
    }
  }
  return pv;
}

diff::NodePtr forward(const MlpSpec& spec, const ParamNodes& params,
                      const diff::Tensor& inputs) {
  if (inputs.rank() != 2 || inputs.shape[1] != spec.input_dim) {
    fail(ErrorKind::Shape, "forward: inputs " + diff::shape_str(inputs.shape) +
                               " do not match input_dim " +
                               std::to_string(spec.input_dim));
  }
  std::size_t batch = inputs.shape[0];
  diff::NodePtr h = diff::make_const(inputs);
  std::size_t num_layers = spec.hidden_dims.size() + 1;
  for (std::size_t i = 0; i < num_layers; ++i) {
    const diff::NodePtr& w = params.at("W" + std::to_string(i));
    const diff::NodePtr& b = params.at("b" + std::to_string(i));
    diff::NodePtr z = diff::add(
        diff::matmul(h, w),
        diff::broadcast(b, {batch, b->value().numel()}));
    if (i + 1 < num_layers) {
      h = spec.activation == Activation::Relu ? diff::relu(z) : diff::tanh(z);
    } else {
      h = z;
    }
  }
  return h;
}

diff::NodePtr xent_loss(const diff::NodePtr& logits,
                        const std::vector<int>& labels) {
  std::vector<double> ld(labels.begin(), labels.end());
  diff::NodePtr label_node =
      diff::make_const(diff::Tensor({labels.size()}, std::move(ld)));
  return diff::softmax_xent(logits, label_node);
}

double accuracy(const diff::Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || labels.size() != logits.rows()) {
    fail(ErrorKind::Shape, "accuracy: logits " + diff::shape_str(logits.shape) +
                               " vs " + std::to_string(labels.size()) +
                               " labels");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (labels[i] < 0 ||
        static_cast<std::size_t>(labels[i]) >= logits.cols()) {
      fail(ErrorKind::Value,
           "accuracy: label " + std::to_string(labels[i]) + " out of range");
    }
    if (diff::argmax_row(logits, i) == static_cast<std::size_t>(labels[i])) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

}  // namespace metastress::learner
