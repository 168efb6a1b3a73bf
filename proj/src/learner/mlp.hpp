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

#include <cstdint>
#include <string>
#include <vector>

#include "learner/params.hpp"

namespace metastress::learner {

enum class Activation { Relu, Tanh };

Activation activation_from_string(const std::string& s);
const char* activation_name(Activation a);

// Feed-forward classifier spec; hidden_dims may be empty (linear model).
struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t num_classes = 0;
  Activation activation = Activation::Relu;

  void validate() const;
  LayoutPtr layout() const;  // W0,b0,W1,b1,... in forward order
};

// Glorot-uniform weights, zero biases; deterministic in the seed.
ParamVector init_params(const MlpSpec& spec, std::uint64_t seed);

// logits[batch, num_classes], differentiable wrt params
diff::NodePtr forward(const MlpSpec& spec, const ParamNodes& params,
                      const diff::Tensor& inputs);

// mean over the batch of -log softmax(logits)[label]
diff::NodePtr xent_loss(const diff::NodePtr& logits,
                        const std::vector<int>& labels);

// fraction of argmax matches; ties broken by lowest class index
double accuracy(const diff::Tensor& logits, const std::vector<int>& labels);

}  // namespace metastress::learner
