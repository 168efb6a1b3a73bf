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
#include <string>
#include <vector>

#include "diff/graph.hpp"

namespace metastress::learner {

struct ParamEntry {
  std::string name;
  diff::Shape shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Contiguous non-overlapping segments covering [0, total).
class ParamLayout {
public:
  static std::shared_ptr<const ParamLayout> build(
      std::vector<std::pair<std::string, diff::Shape>> entries);

  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::size_t total() const { return total_; }
  const ParamEntry& entry(std::size_t i) const { return entries_[i]; }
  const ParamEntry* find(const std::string& name) const;
  std::size_t index_of(const std::string& name) const;

private:
  std::vector<ParamEntry> entries_;
  std::size_t total_ = 0;
};

using LayoutPtr = std::shared_ptr<const ParamLayout>;

// Flat parameter store; the theta of base learners and the cell state of the
// LSTM optimizer.
struct ParamVector {
  LayoutPtr layout;
  std::vector<double> data;

  ParamVector() = default;
  ParamVector(LayoutPtr l, std::vector<double> d);
  static ParamVector zeros(LayoutPtr l);
  static ParamVector full(LayoutPtr l, double v);

  std::size_t size() const { return data.size(); }
  diff::Tensor tensor(const std::string& name) const;
  diff::Tensor tensor(const ParamEntry& e) const;
  void set_tensor(const ParamEntry& e, const diff::Tensor& t);
};

// The same parameters as live graph nodes, one node per layout entry.
struct ParamNodes {
  LayoutPtr layout;
  std::vector<diff::NodePtr> nodes;

  static ParamNodes leaves(const ParamVector& pv, bool requires_grad = true);
  // differentiable unflatten of a rank-1 node of length layout->total()
  static ParamNodes from_flat(const diff::NodePtr& flat, const LayoutPtr& l);

  const diff::NodePtr& at(const std::string& name) const;
  diff::NodePtr flat() const;   // differentiable flatten
  ParamVector values() const;   // copies current values out of the graph
};

}  // namespace metastress::learner
