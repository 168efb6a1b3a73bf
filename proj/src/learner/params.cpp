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

#include "learner/params.hpp"

#include <algorithm>

#include "common/error.hpp"

namespace metastress::learner {

std::shared_ptr<const ParamLayout> ParamLayout::build(
    std::vector<std::pair<std::string, diff::Shape>> entries) {
  auto layout = std::make_shared<ParamLayout>();
  std::size_t offset = 0;
  for (auto& [name, shape] : entries) {
    ParamEntry e;
    e.name = std::move(name);
    e.size = diff::shape_numel(shape);
    e.shape = std::move(shape);
    e.offset = offset;
    offset += e.size;
    layout->entries_.push_back(std::move(e));
  }
  layout->total_ = offset;
  return layout;
}

const ParamEntry* ParamLayout::find(const std::string& name) const {
  for (const ParamEntry& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::size_t ParamLayout::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  fail(ErrorKind::Value, "param layout has no entry named " + name);
}

ParamVector::ParamVector(LayoutPtr l, std::vector<double> d)
    : layout(std::move(l)), data(std::move(d)) {
  if (data.size() != layout->total()) {
    fail(ErrorKind::Shape, "param vector length " +
                               std::to_string(data.size()) +
                               " does not match layout total " +
                               std::to_string(layout->total()));
  }
}

ParamVector ParamVector::zeros(LayoutPtr l) {
  std::size_t n = l->total();
  return ParamVector(std::move(l), std::vector<double>(n, 0.0));
}

ParamVector ParamVector::full(LayoutPtr l, double v) {
  std::size_t n = l->total();
  return ParamVector(std::move(l), std::vector<double>(n, v));
}

diff::Tensor ParamVector::tensor(const ParamEntry& e) const {
  std::vector<double> d(data.begin() + static_cast<std::ptrdiff_t>(e.offset),
                        data.begin() +
                            static_cast<std::ptrdiff_t>(e.offset + e.size));
  return diff::Tensor(e.shape, std::move(d));
}

diff::Tensor ParamVector::tensor(const std::string& name) const {
  const ParamEntry* e = layout->find(name);
  if (!e) fail(ErrorKind::Value, "param layout has no entry named " + name);
  return tensor(*e);
}

void ParamVector::set_tensor(const ParamEntry& e, const diff::Tensor& t) {
  std::copy(t.data.begin(), t.data.end(),
            data.begin() + static_cast<std::ptrdiff_t>(e.offset));
}

ParamNodes ParamNodes::leaves(const ParamVector& pv, bool requires_grad) {
  ParamNodes out;
  out.layout = pv.layout;
  out.nodes.reserve(pv.layout->entries().size());
  for (const ParamEntry& e : pv.layout->entries()) {
    out.nodes.push_back(diff::make_leaf(pv.tensor(e), requires_grad));
  }
  return out;
}

ParamNodes ParamNodes::from_flat(const diff::NodePtr& flat,
                                 const LayoutPtr& l) {
  if (flat->value().numel() != l->total()) {
    fail(ErrorKind::Shape, "flat node length does not match layout");
  }
  ParamNodes out;
  out.layout = l;
  out.nodes.reserve(l->entries().size());
  for (const ParamEntry& e : l->entries()) {
    diff::NodePtr piece = diff::slice(flat, 0, e.offset, e.size);
    out.nodes.push_back(e.shape.size() == 1 && e.shape[0] == e.size
                            ? piece
                            : diff::reshape(piece, e.shape));
  }
  return out;
}

const diff::NodePtr& ParamNodes::at(const std::string& name) const {
  return nodes[layout->index_of(name)];
}

diff::NodePtr ParamNodes::flat() const {
  std::vector<diff::NodePtr> parts;
  parts.reserve(nodes.size());
  for (const diff::NodePtr& n : nodes) {
    parts.push_back(diff::reshape(n, {n->value().numel()}));
  }
  return diff::concat(std::move(parts), 0);
}

ParamVector ParamNodes::values() const {
  std::vector<double> data;
  data.reserve(layout->total());
  for (const diff::NodePtr& n : nodes) {
    data.insert(data.end(), n->value().data.begin(), n->value().data.end());
  }
  return ParamVector(layout, std::move(data));
}

}  // namespace metastress::learner
