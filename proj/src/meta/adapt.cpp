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

#include "meta/adapt.hpp"

#include "common/error.hpp"

namespace metastress::meta {

TaskLoss episode_task(const learner::MlpSpec& spec, const tasks::Episode& ep) {
  TaskLoss task;
  task.index = ep.index;
  // closures share one copy of the episode
  auto shared = std::make_shared<tasks::Episode>(ep);
  task.support_loss = [spec, shared](const learner::ParamNodes& theta) {
    return learner::xent_loss(learner::forward(spec, theta, shared->support_x),
                              shared->support_y);
  };
  task.query_loss = [spec, shared](const learner::ParamNodes& theta) {
    return learner::xent_loss(learner::forward(spec, theta, shared->query_x),
                              shared->query_y);
  };
  task.query_accuracy = [spec, shared](const learner::ParamVector& theta) {
    learner::ParamNodes nodes = learner::ParamNodes::leaves(theta, false);
    return learner::accuracy(
        learner::forward(spec, nodes, shared->query_x)->value(),
        shared->query_y);
  };
  return task;
}

AdaptResult inner_adapt(const learner::ParamNodes& theta0,
                        const TaskLoss& task, const InnerLr& lr, int steps,
                        bool create_graph) {
  if (steps < 1) {
    fail(ErrorKind::Value, "inner_adapt: steps must be >= 1");
  }
  AdaptResult out;
  out.trajectory.push_back(theta0);
  for (int t = 0; t < steps; ++t) {
    const learner::ParamNodes& theta = out.trajectory.back();
    diff::NodePtr loss;
    try {
      loss = task.support_loss(theta);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::NonFinite) {
        fail(ErrorKind::NonFinite, "inner_adapt: non-finite loss at step " +
                                       std::to_string(t) + ": " + e.what());
      }
      throw;
    }
    out.support_losses.push_back(loss->value().scalar_value());
    diff::GradMap g = diff::grad(loss, theta.nodes, create_graph);

    learner::ParamNodes next;
    next.layout = theta.layout;
    next.nodes.reserve(theta.nodes.size());
    for (std::size_t i = 0; i < theta.nodes.size(); ++i) {
      diff::NodePtr gi = g.at(theta.nodes[i]);
      diff::NodePtr update;
      if (std::holds_alternative<double>(lr)) {
        update = diff::scale(gi, std::get<double>(lr));
      } else {
        update = diff::mul(std::get<learner::ParamNodes>(lr).nodes[i], gi);
      }
      next.nodes.push_back(diff::sub(theta.nodes[i], update));
    }
    out.trajectory.push_back(std::move(next));
  }
  return out;
}

}  // namespace metastress::meta
