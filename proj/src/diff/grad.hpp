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

#include <functional>
#include <unordered_map>

#include "diff/graph.hpp"

namespace metastress::diff {

// Gradients keyed by input node. Absent entries mean zero gradient.
class GradMap {
public:
  void set(const NodePtr& x, NodePtr g) { grads_[x.get()] = std::move(g); }
  bool contains(const NodePtr& x) const { return grads_.count(x.get()) != 0; }

  // zero tensor of x's shape when absent
  NodePtr at(const NodePtr& x) const {
    auto it = grads_.find(x.get());
    if (it != grads_.end()) return it->second;
    return make_const(Tensor::zeros(x->value().shape));
  }

private:
  std::unordered_map<const Node*, NodePtr> grads_;
};

// Exact reverse-mode gradients of a scalar output. With create_graph the
// returned gradients are graph nodes that can be differentiated again
// (needed for the second-order meta updates); without it they are detached
// constants. Nodes not reachable from the output get zero gradients.
GradMap grad(const NodePtr& output, const std::vector<NodePtr>& wrt,
             bool create_graph);

// Central-difference gradient oracle, (f(x+eps e_j) - f(x-eps e_j)) / 2 eps.
std::vector<double> finite_diff(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& at, double eps);

}  // namespace metastress::diff
