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
#include <variant>
#include <vector>

#include "diff/grad.hpp"
#include "learner/mlp.hpp"
#include "tasks/pool.hpp"

namespace metastress::meta {

// Differentiable objectives of one task. Strategies only ever see this
// interface, which keeps scalar surrogate tasks (used by the oracles)
// and real episodes on the same code path.
struct TaskLoss {
  std::uint64_t index = 0;
  std::function<diff::NodePtr(const learner::ParamNodes&)> support_loss;
  std::function<diff::NodePtr(const learner::ParamNodes&)> query_loss;
  std::function<double(const learner::ParamVector&)> query_accuracy;
};

TaskLoss episode_task(const learner::MlpSpec& spec, const tasks::Episode& ep);

// inner-loop learning rate: one shared scalar, or per-coordinate nodes
// (MetaSGD's alpha, differentiable)
using InnerLr = std::variant<double, learner::ParamNodes>;

struct AdaptResult {
  std::vector<learner::ParamNodes> trajectory;  // theta^(0) .. theta^(steps)
  std::vector<double> support_losses;           // one per step

  const learner::ParamNodes& final_params() const { return trajectory.back(); }
};

// theta^(t+1) = theta^(t) - lr * grad of the support loss. With create_graph
// the trajectory stays differentiable wrt theta0 (and alpha).
AdaptResult inner_adapt(const learner::ParamNodes& theta0,
                        const TaskLoss& task, const InnerLr& lr, int steps,
                        bool create_graph);

}  // namespace metastress::meta
